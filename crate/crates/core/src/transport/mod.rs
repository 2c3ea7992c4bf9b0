//! Framed messages between the three roles, with per-edge FIFO delivery,
//! injected latency and communication accounting.

pub mod endpoint;
pub mod frame;
pub mod inproc;
pub mod ledger;
pub mod tcp;

pub use endpoint::{Endpoint, TranscriptEntry};
pub use frame::{Kind, Phase, ProtocolMessage, Role};
pub use ledger::{CommLedger, Counter};
