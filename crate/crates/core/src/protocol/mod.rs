//! Executable form of the interactive typicality scheme.
//!
//! Random nested codebooks are drawn from the message marginals of a channel
//! stack; node A (observing `x`) and node B (observing `y`) alternately pick
//! codewords jointly typical with everything seen so far, and A accepts H0 if
//! the final exchange is typical with `x`. Error probabilities are estimated
//! by Monte Carlo or computed exactly by enumeration at small blocklengths.
//! The module also carries the exact one-bit zero-rate scheme and numeric
//! checkers for the multi-letter converse bound and the telescoping identity
//! used in the single-letterization.

mod codebook;
mod converse;
mod decision;
mod identity;
mod monte_carlo;
mod one_bit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponent::ExponentError;
use crate::prob::ProbError;
use crate::types::TypeError;

pub use codebook::{build_codebooks, build_codebooks_with_rates, message_rates, Codebooks, SYMBOL_CAP};
pub use converse::{converse_bound_check, ConverseCheckResult, InteractiveCode};
pub use decision::{
    exact_errors, run_protocol, ExactErrors, Protocol, RoundIndices, Stage, Transcript, TrialConfig,
    ENUMERATION_CAP,
};
pub use identity::{csiszar_identity_check, IdentityCheck};
pub use monte_carlo::{monte_carlo_errors, wilson_interval, ErrorEstimate, Slope};
pub use one_bit::{zero_rate_one_bit, OneBitResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Types(#[from] TypeError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{what} needs 2^{log2_needed:.2} items, cap is 2^{log2_cap:.0}")]
    SizeGuard {
        what: &'static str,
        log2_needed: f64,
        log2_cap: f64,
    },
    #[error("H1 joint has zero mass at (x={x}, y={y}); full support is required")]
    SupportViolation { x: usize, y: usize },
    #[error("the code never accepts under H1 (beta = 0), so the bound is vacuous")]
    DegenerateCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub(crate) fn index(self) -> u64 {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }
}

/// Typicality slacks: `delta` for A's first search, `delta_b` for every
/// check and search at B, `delta_final` for A's later searches and final
/// check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub delta: f64,
    pub delta_b: f64,
    pub delta_final: f64,
}

impl Deltas {
    pub fn new(delta: f64, delta_b: f64, delta_final: f64) -> Result<Self, ProtocolError> {
        let d = Self {
            delta,
            delta_b,
            delta_final,
        };
        d.validate()?;
        Ok(d)
    }

    /// `delta = max(0.02, n^{-1/3} / 4)`, `delta_b = 2 delta`,
    /// `delta_final = 3 delta`.
    pub fn default_for(n: usize) -> Self {
        Self::from_base(f64::max(0.02, (n.max(1) as f64).powf(-1.0 / 3.0) / 4.0))
    }

    pub fn from_base(delta: f64) -> Self {
        Self {
            delta,
            delta_b: 2.0 * delta,
            delta_final: 3.0 * delta,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let ok = self.delta >= 0.0 && self.delta <= self.delta_b && self.delta_b <= self.delta_final;
        if ok && self.delta_final.is_finite() {
            Ok(())
        } else {
            Err(ProtocolError::InvalidInput(format!(
                "typicality slacks must satisfy 0 <= {} <= {} <= {}",
                self.delta, self.delta_b, self.delta_final
            )))
        }
    }
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Odometer over all sequences of length `n` on `k` letters.
pub(crate) fn for_each_sequence(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut s = vec![0usize; n];
    loop {
        f(&s);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            s[i] += 1;
            if s[i] < k {
                break;
            }
            s[i] = 0;
        }
    }
}

pub(crate) fn guard(what: &'static str, log2_needed: f64, log2_cap: f64) -> Result<(), ProtocolError> {
    if log2_needed > log2_cap + 1e-12 {
        Err(ProtocolError::SizeGuard {
            what,
            log2_needed,
            log2_cap,
        })
    } else {
        Ok(())
    }
}
