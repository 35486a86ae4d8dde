//! Error exponents of collaborative distributed binary hypothesis testing.
//!
//! Two statisticians observe `X^n` and `Y^n` and exchange messages over `K`
//! rounds under a total rate budget before deciding between two joint
//! measures. This crate computes the achievable Type-II error exponents by
//! max-min optimization over auxiliary message channels, and simulates the
//! typicality-based interactive protocol that attains them, with exact
//! enumeration oracles for small blocklengths.
//!
//! * [`prob`]: pmfs, joint tensors, channels and information measures.
//! * [`types`]: method-of-types utilities.
//! * [`exponent`]: inner I-projection, outer channel search and the closed
//!   special cases.
//! * [`protocol`]: random codebooks, the interactive decision rule, Monte
//!   Carlo and exact error probabilities, and the converse/identity audits.

pub mod exponent;
pub mod prob;
pub mod protocol;
pub mod seed;
pub mod types;

pub use prob::{Axis, Channel, JointPmf, Pmf};
