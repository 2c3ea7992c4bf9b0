//! Three-party secret-sharing engine for vertically partitioned linear and
//! logistic regression.
//!
//! Party A holds a feature block, party B holds the other block plus the
//! labels, and a coordinator C helps with multiplications while only ever
//! seeing shares or masked values. All arithmetic happens in the ring
//! `Z_{2^l}` with a two's-complement fixed-point encoding.

pub mod cost;
pub mod data;
pub mod error;
pub mod linalg;
pub mod protocol;
pub mod report;
pub mod ring;
pub mod sharing;
pub mod sigmoid;
pub mod transport;

pub use error::{Error, Result, TransportError};
pub use linalg::RingMatrix;
pub use ring::{FixedPointConfig, Ring, RingElement, SeededRng};
pub use sharing::ShareMatrix;
