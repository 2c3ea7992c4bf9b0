//! Wire format, all little-endian:
//!
//! ```text
//! u32 frame_len   (bytes after this field)
//! u8  phase, u8 sender, u8 receiver, u8 kind
//! u32 iteration, u32 rows, u32 cols
//! u64 * rows * cols
//! ```

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::TransportError;
use crate::linalg::RingMatrix;
use crate::ring::Ring;

pub const HEADER_LEN: usize = 16;
/// Upper bound on a single frame body, a guard against corrupt length fields.
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[repr(u8)]
pub enum Role {
    A = 0,
    B = 1,
    C = 2,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::A, Role::B, Role::C];

    pub fn from_u8(v: u8) -> Option<Role> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::A => "a",
            Role::B => "b",
            Role::C => "c",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Some(Role::A),
            "b" => Some(Role::B),
            "c" => Some(Role::C),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[repr(u8)]
pub enum Phase {
    Init = 0,
    Forward1 = 1,
    Forward2 = 2,
    Backward = 3,
    Reshare = 4,
    Reconstruct = 5,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Init,
        Phase::Forward1,
        Phase::Forward2,
        Phase::Backward,
        Phase::Reshare,
        Phase::Reconstruct,
    ];

    pub fn from_u8(v: u8) -> Option<Phase> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Forward1 => "forward1",
            Phase::Forward2 => "forward2",
            Phase::Backward => "backward",
            Phase::Reshare => "reshare",
            Phase::Reconstruct => "reconstruct",
        }
    }

    /// Phases that repeat every training iteration.
    pub fn is_iterative(self) -> bool {
        !matches!(self, Phase::Init | Phase::Reconstruct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[repr(u8)]
pub enum Kind {
    FA = 0,
    FB = 1,
    GammaFA = 2,
    GammaFB = 3,
    UShare = 4,
    VShare = 5,
    SShare = 6,
    H0 = 7,
    H1 = 8,
    R0 = 9,
    R1 = 10,
    WShare = 11,
    XShare = 12,
    Mask = 13,
    ZShare = 14,
    Rescaled = 15,
    /// Connection handshake; never part of the protocol transcript.
    Hello = 255,
}

impl Kind {
    pub const PROTOCOL: [Kind; 16] = [
        Kind::FA,
        Kind::FB,
        Kind::GammaFA,
        Kind::GammaFB,
        Kind::UShare,
        Kind::VShare,
        Kind::SShare,
        Kind::H0,
        Kind::H1,
        Kind::R0,
        Kind::R1,
        Kind::WShare,
        Kind::XShare,
        Kind::Mask,
        Kind::ZShare,
        Kind::Rescaled,
    ];

    pub fn from_u8(v: u8) -> Option<Kind> {
        if v == 255 {
            return Some(Kind::Hello);
        }
        Self::PROTOCOL.get(v as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub iteration: u32,
    pub phase: Phase,
    pub sender: Role,
    pub receiver: Role,
    pub kind: Kind,
    pub rows: u32,
    pub cols: u32,
    pub payload: Vec<u64>,
}

impl ProtocolMessage {
    pub fn new(iteration: u32, phase: Phase, sender: Role, receiver: Role, kind: Kind, m: &RingMatrix) -> Self {
        ProtocolMessage {
            iteration,
            phase,
            sender,
            receiver,
            kind,
            rows: m.rows() as u32,
            cols: m.cols() as u32,
            payload: m.data().to_vec(),
        }
    }

    pub fn key(&self) -> (u32, Phase, Role, Role, Kind) {
        (self.iteration, self.phase, self.sender, self.receiver, self.kind)
    }

    pub fn elements(&self) -> u64 {
        self.payload.len() as u64
    }

    /// Frame size including the length prefix.
    pub fn wire_len(&self) -> usize {
        4 + HEADER_LEN + 8 * self.payload.len()
    }

    pub fn into_matrix(self, ring: Ring) -> Result<RingMatrix, TransportError> {
        RingMatrix::from_vec(ring, self.rows as usize, self.cols as usize, self.payload)
            .map_err(|e| TransportError::Malformed(e.to_string()))
    }

    pub fn encode(&self) -> Vec<u8> {
        let body = HEADER_LEN + 8 * self.payload.len();
        let mut out = Vec::with_capacity(4 + body);
        out.extend_from_slice(&(body as u32).to_le_bytes());
        out.extend_from_slice(&[self.phase as u8, self.sender as u8, self.receiver as u8, self.kind as u8]);
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a frame body (everything after the length prefix).
    pub fn decode_body(body: &[u8]) -> Result<Self, TransportError> {
        if body.len() < HEADER_LEN {
            return Err(TransportError::Malformed(format!("frame of {} bytes", body.len())));
        }
        let phase = Phase::from_u8(body[0]).ok_or_else(|| TransportError::Malformed(format!("phase {}", body[0])))?;
        let sender = Role::from_u8(body[1]).ok_or_else(|| TransportError::Malformed(format!("sender {}", body[1])))?;
        let receiver =
            Role::from_u8(body[2]).ok_or_else(|| TransportError::Malformed(format!("receiver {}", body[2])))?;
        let kind = Kind::from_u8(body[3]).ok_or_else(|| TransportError::Malformed(format!("kind {}", body[3])))?;
        let word = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().unwrap());
        let (iteration, rows, cols) = (word(4), word(8), word(12));
        let n = rows as usize * cols as usize;
        if body.len() != HEADER_LEN + 8 * n {
            return Err(TransportError::Malformed(format!(
                "{}x{} payload in a {}-byte frame",
                rows,
                cols,
                body.len()
            )));
        }
        let payload = body[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ProtocolMessage {
            iteration,
            phase,
            sender,
            receiver,
            kind,
            rows,
            cols,
            payload,
        })
    }

    pub fn decode(frame: &[u8]) -> Result<Self, TransportError> {
        if frame.len() < 4 {
            return Err(TransportError::Malformed("missing length prefix".into()));
        }
        let len = u32::from_le_bytes(frame[..4].try_into().unwrap()) as usize;
        if frame.len() != 4 + len {
            return Err(TransportError::Malformed(format!(
                "length prefix {len} but {} bytes follow",
                frame.len() - 4
            )));
        }
        Self::decode_body(&frame[4..])
    }
}

/// Reads one frame (prefix included) from a stream.
pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>, TransportError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let n = u32::from_le_bytes(len) as usize;
    if !(HEADER_LEN..=MAX_FRAME).contains(&n) {
        return Err(TransportError::Malformed(format!("frame length {n}")));
    }
    let mut buf = vec![0u8; 4 + n];
    buf[..4].copy_from_slice(&len);
    r.read_exact(&mut buf[4..])?;
    Ok(buf)
}

pub fn write_frame(w: &mut impl Write, frame: &[u8]) -> Result<(), TransportError> {
    w.write_all(frame)?;
    w.flush()?;
    Ok(())
}
