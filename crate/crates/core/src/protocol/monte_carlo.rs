//! Monte Carlo estimates of the two error probabilities.

use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decision::Protocol;
use super::{Hypothesis, ProtocolError};
use crate::prob::JointPmf;
use crate::seed::derive_rng;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Exponent estimate `-(1/n) log2 beta_hat`, or the censored lower bound
/// `log2(T) / n` when no H1 trial was accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Slope {
    Estimate(f64),
    Censored(f64),
}

impl Slope {
    pub fn value(self) -> f64 {
        match self {
            Slope::Estimate(v) | Slope::Censored(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub n: usize,
    /// Trials per hypothesis.
    pub trials: u64,
    pub alpha_errors: u64,
    pub beta_errors: u64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub alpha_ci: (f64, f64),
    pub beta_ci: (f64, f64),
    pub slope: Slope,
}

/// Wilson score interval at 95% for `k` successes out of `t`.
pub fn wilson_interval(k: u64, t: u64) -> (f64, f64) {
    if t == 0 {
        return (0.0, 1.0);
    }
    let (k, t) = (k as f64, t as f64);
    let p = k / t;
    let z2 = Z95 * Z95;
    let den = 1.0 + z2 / t;
    let centre = (p + z2 / (2.0 * t)) / den;
    let half = Z95 * (p * (1.0 - p) / t + z2 / (4.0 * t * t)).sqrt() / den;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

fn sample_pair(sampler: &WeightedIndex<f64>, y_size: usize, n: usize, seed: u64, truth: Hypothesis, trial: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = derive_rng(seed, "sample", &[truth.index(), trial]);
    (0..n)
        .map(|_| {
            let c = sampler.sample(&mut rng);
            (c / y_size, c % y_size)
        })
        .unzip()
}

/// `trials` runs under each hypothesis with `(x, y)` drawn i.i.d. from the
/// true joint; trial `t` under hypothesis `h` uses the streams
/// `(master, "sample", h, t)` and `(master, "tie", h, t, stage)`.
pub fn monte_carlo_errors(
    protocol: &Protocol,
    p_h0: &JointPmf,
    p_h1: &JointPmf,
    trials: u64,
) -> Result<ErrorEstimate, ProtocolError> {
    if trials == 0 {
        return Err(ProtocolError::InvalidInput("at least one trial is required".into()));
    }
    let (xs, ys, n) = (protocol.x_size(), protocol.y_size(), protocol.n());
    let seed = protocol.config().master_seed;
    let mut errors = [0u64; 2];
    for (slot, (truth, p)) in [(Hypothesis::H0, p_h0), (Hypothesis::H1, p_h1)].into_iter().enumerate() {
        if p.sizes() != [xs, ys] {
            return Err(ProtocolError::ShapeMismatch("joint does not match the protocol alphabets".into()));
        }
        let sampler = WeightedIndex::new(p.weights().iter().copied())
            .map_err(|e| ProtocolError::InvalidInput(e.to_string()))?;
        // alpha counts rejections under H0, beta acceptances under H1
        let wanted = if truth == Hypothesis::H0 { Hypothesis::H1 } else { Hypothesis::H0 };
        errors[slot] = (0..trials)
            .into_par_iter()
            .map(|t| {
                let (x, y) = sample_pair(&sampler, ys, n, seed, truth, t);
                u64::from(protocol.run_unchecked(t, truth, &x, &y).decision == wanted)
            })
            .sum();
    }
    let tf = trials as f64;
    let beta_hat = errors[1] as f64 / tf;
    let slope = if errors[1] == 0 {
        Slope::Censored(tf.log2() / n as f64)
    } else {
        Slope::Estimate(-beta_hat.log2() / n as f64)
    };
    Ok(ErrorEstimate {
        n,
        trials,
        alpha_errors: errors[0],
        beta_errors: errors[1],
        alpha_hat: errors[0] as f64 / tf,
        beta_hat,
        alpha_ci: wilson_interval(errors[0], trials),
        beta_ci: wilson_interval(errors[1], trials),
        slope,
    })
}
