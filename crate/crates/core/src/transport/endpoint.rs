use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::frame::{Kind, Phase, ProtocolMessage, Role};
use super::ledger::CommLedger;
use crate::error::{Error, Result, TransportError};
use crate::linalg::RingMatrix;
use crate::ring::Ring;

/// A frame plus the instant it may be handed to the receiver.
pub struct Delivery {
    pub at: Instant,
    pub frame: Vec<u8>,
}

pub trait FrameSink: Send {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError>;
}

pub struct Link {
    pub sink: Box<dyn FrameSink>,
    pub inbox: Receiver<Delivery>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub iteration: u32,
    pub phase: Phase,
    pub sender: Role,
    pub receiver: Role,
    pub kind: Kind,
    pub rows: u32,
    pub cols: u32,
}

/// One role's view of the network: a link to each peer, the ledger of
/// everything it sent, and a transcript of sent headers.
pub struct Endpoint {
    role: Role,
    ring: Ring,
    links: [Option<Link>; 3],
    timeout: Duration,
    ledger: CommLedger,
    transcript: Vec<TranscriptEntry>,
    digest: Sha256,
    capture: bool,
    inbound: Vec<ProtocolMessage>,
}

impl Endpoint {
    pub fn new(role: Role, ring: Ring, links: [Option<Link>; 3], timeout: Duration) -> Self {
        Endpoint {
            role,
            ring,
            links,
            timeout,
            ledger: CommLedger::new(),
            transcript: Vec::new(),
            digest: Sha256::new(),
            capture: false,
            inbound: Vec::new(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    /// Keep a copy of every received protocol message.
    pub fn capture_inbound(&mut self, on: bool) {
        self.capture = on;
    }

    pub fn inbound(&self) -> &[ProtocolMessage] {
        &self.inbound
    }

    pub fn take_inbound(&mut self) -> Vec<ProtocolMessage> {
        std::mem::take(&mut self.inbound)
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// sha256 over every protocol frame sent so far.
    pub fn transcript_digest(&self) -> String {
        hex(&self.digest.clone().finalize())
    }

    fn link(&mut self, peer: Role, phase: Phase) -> Result<&mut Link> {
        self.links[peer.index()].as_mut().ok_or(Error::Transport {
            phase,
            source: TransportError::NoPeer(peer),
        })
    }

    pub fn send(&mut self, to: Role, phase: Phase, kind: Kind, iteration: u32, m: &RingMatrix) -> Result<()> {
        let msg = ProtocolMessage::new(iteration, phase, self.role, to, kind, m);
        let frame = msg.encode();
        self.digest.update(&frame);
        self.ledger.record(&msg);
        self.transcript.push(TranscriptEntry {
            iteration,
            phase,
            sender: self.role,
            receiver: to,
            kind,
            rows: msg.rows,
            cols: msg.cols,
        });
        self.link(to, phase)?
            .sink
            .send_frame(frame)
            .map_err(|source| Error::Transport { phase, source })
    }

    fn recv_raw(&mut self, from: Role, phase: Phase) -> Result<ProtocolMessage> {
        let timeout = self.timeout;
        let link = self.link(from, phase)?;
        let d = link.inbox.recv_timeout(timeout).map_err(|e| Error::Transport {
            phase,
            source: match e {
                RecvTimeoutError::Timeout => TransportError::Timeout(from),
                RecvTimeoutError::Disconnected => TransportError::Disconnected(from),
            },
        })?;
        let now = Instant::now();
        if d.at > now {
            std::thread::sleep(d.at - now);
        }
        ProtocolMessage::decode(&d.frame).map_err(|source| Error::Transport { phase, source })
    }

    /// Blocks for the next message from `from` and checks that it is the one
    /// the protocol expects at this point.
    pub fn recv(&mut self, from: Role, phase: Phase, kind: Kind, iteration: u32) -> Result<RingMatrix> {
        let msg = self.recv_raw(from, phase)?;
        let expected = (iteration, phase, from, self.role, kind);
        if msg.key() != expected {
            return Err(Error::Transport {
                phase,
                source: TransportError::Desync {
                    expected,
                    got: msg.key(),
                },
            });
        }
        if self.capture {
            self.inbound.push(msg.clone());
        }
        msg.into_matrix(self.ring).map_err(|source| Error::Transport { phase, source })
    }

    /// Exchanges config hashes with every connected peer.
    pub fn handshake(&mut self, config_hash: &[u8; 32]) -> Result<()> {
        let mut payload = vec![self.role as u64];
        payload.extend(config_hash.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())));
        let peers: Vec<Role> = Role::ALL
            .into_iter()
            .filter(|r| self.links[r.index()].is_some())
            .collect();
        for &p in &peers {
            let msg = ProtocolMessage {
                iteration: 0,
                phase: Phase::Init,
                sender: self.role,
                receiver: p,
                kind: Kind::Hello,
                rows: 1,
                cols: payload.len() as u32,
                payload: payload.clone(),
            };
            let frame = msg.encode();
            self.link(p, Phase::Init)?
                .sink
                .send_frame(frame)
                .map_err(|source| Error::Transport {
                    phase: Phase::Init,
                    source,
                })?;
        }
        for &p in &peers {
            let msg = self.recv_raw(p, Phase::Init)?;
            let err = |source| Error::Transport {
                phase: Phase::Init,
                source,
            };
            if msg.kind != Kind::Hello || msg.sender != p {
                return Err(err(TransportError::Desync {
                    expected: (0, Phase::Init, p, self.role, Kind::Hello),
                    got: msg.key(),
                }));
            }
            if msg.payload[1..] != payload[1..] {
                return Err(err(TransportError::ConfigMismatch(p)));
            }
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
