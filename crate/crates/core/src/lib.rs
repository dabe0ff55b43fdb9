//! Learning circuit parameters from measurement outcomes and feedback.
//!
//! A register of candidate parameter values is coupled to a small quantum
//! circuit; each pass/fail trial conditions the register on the observed
//! outcome, and feedback operations reshape it after failures.

pub mod aqft;
pub mod error;
pub mod feedback;
pub mod filter;
pub mod grover;
pub mod harness;
pub mod optimizer;
pub mod oracle;
pub mod parameter;
pub mod selftest;
pub mod statevector;

pub use error::{Error, Result};
