//! The three role state machines and the drivers that run them.
//!
//! Each role exposes one method per protocol step, taking the matrices it
//! received and returning the ones it sends. [`session::LocalSession`] chains
//! the steps directly in one thread; [`runner`] runs each role against a
//! transport endpoint.

pub mod config;
pub mod coordinator;
pub mod masks;
pub mod party_a;
pub mod party_b;
pub mod runner;
pub mod session;

use crate::linalg::RingMatrix;

pub use config::{BatchPlan, MaskMode, Task, TrainConfig};
pub use coordinator::{BackwardMsg, Coordinator, ViewLog};
pub use masks::MaskSchedule;
pub use party_a::PartyA;
pub use party_b::PartyB;
pub use runner::{run_role, simulate, RoleInput, RoleOutcome, SimOptions};
pub use session::{IterationTrace, LocalSession};

/// One party's untruncated gradient shares for an iteration, at scale `2^{2f}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientShares {
    pub index: u8,
    pub ga: RingMatrix,
    pub gb: RingMatrix,
}
