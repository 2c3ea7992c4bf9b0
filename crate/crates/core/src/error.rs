use crate::transport::frame::{Kind, Phase, Role};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("value {value} does not fit a {ring_bits}-bit ring with {frac_bits} fractional bits")]
    Overflow {
        value: f64,
        ring_bits: u32,
        frac_bits: u32,
    },
    #[error("element {0:#x} is even and has no inverse")]
    NotInvertible(u64),
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("share index mismatch: expected {expected}, got {got}")]
    ShareIndex { expected: u8, got: u8 },
    #[error("ring mismatch: {0} vs {1} bits")]
    RingMismatch(u32, u32),
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("remez exchange did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("data: {0}")]
    Data(String),
    #[error("training diverged at iteration {0}")]
    Diverged(usize),
    #[error("transport failure in phase {phase:?}: {source}")]
    Transport {
        phase: Phase,
        #[source]
        source: TransportError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("timed out waiting for {0:?}")]
    Timeout(Role),
    #[error("connection to {0:?} lost")]
    Disconnected(Role),
    #[error("desync: expected {expected:?}, got {got:?}")]
    Desync {
        expected: (u32, Phase, Role, Role, Kind),
        got: (u32, Phase, Role, Role, Kind),
    },
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("config hash mismatch with {0:?}")]
    ConfigMismatch(Role),
    #[error("no channel to {0:?}")]
    NoPeer(Role),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
