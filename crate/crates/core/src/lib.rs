//! Session-based scheduling of one federated-learning communication round
//! that shares an OFDMA cell with high-bandwidth downlink traffic.

pub mod convex;
pub mod error;
pub mod outcome;
pub mod rigid;
pub mod ratemodel;
pub mod scenario;
pub mod session;
pub mod sim;
pub mod transform;

pub use error::{Error, Result, SolveError};
pub use outcome::RoundOutcome;
pub use scenario::{FlWorkload, Overrides, RadioConstants, Scenario, UeKind, UeRecord};
