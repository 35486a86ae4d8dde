//! The zero-rate scheme with a single bit: A sends whether `x` is δ-typical
//! for `P_X`, and B accepts H0 iff that bit is set and `y` is δ-typical for
//! `P_Y` (both marginals of H0).
//!
//! The decision depends on `(x, y)` only through the marginal types, so the
//! error probabilities are sums over joint types of
//! `|T(type)| * prod_cells p(cell)^count`, evaluated in the log domain.

use serde::{Deserialize, Serialize};

use super::{guard, ProtocolError};
use crate::prob::JointPmf;
use crate::types::{counts_typical, for_each_composition, type_count, LogFactorials, DEFAULT_TYPE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneBitResult {
    pub n: usize,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `log2 beta`, kept separately because `beta` may underflow.
    pub log2_beta: f64,
    /// `-(1/n) log2 beta`; infinite when `beta = 0`.
    pub slope: f64,
    pub joint_types: u64,
}

/// Streaming `log2 sum 2^{v_i}`.
#[derive(Debug, Clone, Copy)]
struct Log2Sum {
    max: f64,
    scaled: f64,
}

impl Log2Sum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.scaled = self.scaled * (self.max - v).exp2() + 1.0;
            self.max = v;
        } else {
            self.scaled += (v - self.max).exp2();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.log2()
        }
    }
}

pub fn zero_rate_one_bit(p_h0: &JointPmf, p_h1: &JointPmf, n: usize, delta: f64) -> Result<OneBitResult, ProtocolError> {
    let sizes = p_h0.sizes();
    let [xs, ys] = sizes[..] else {
        return Err(ProtocolError::ShapeMismatch("expected joints over (X, Y)".into()));
    };
    if p_h1.sizes() != sizes {
        return Err(ProtocolError::ShapeMismatch("H0 and H1 joints differ in shape".into()));
    }
    if let Some(i) = p_h1.weights().iter().position(|&w| w <= 0.0) {
        return Err(ProtocolError::SupportViolation { x: i / ys, y: i % ys });
    }
    if !(delta >= 0.0) || n == 0 {
        return Err(ProtocolError::InvalidInput("need n >= 1 and delta >= 0".into()));
    }
    let cells = xs * ys;
    let count = type_count(n as u64, cells);
    guard("joint types", (count as f64).log2(), (DEFAULT_TYPE_CAP as f64).log2())?;

    let w0 = p_h0.weights();
    let mut px = vec![0.0; xs];
    let mut py = vec![0.0; ys];
    for (c, &w) in w0.iter().enumerate() {
        px[c / ys] += w;
        py[c % ys] += w;
    }
    let l0: Vec<f64> = w0.iter().map(|w| w.log2()).collect();
    let l1: Vec<f64> = p_h1.weights().iter().map(|w| w.log2()).collect();
    let lf = LogFactorials::new(n as u64);

    let mut reject0 = Log2Sum::new();
    let mut accept1 = Log2Sum::new();
    let mut cx = vec![0u64; xs];
    let mut cy = vec![0u64; ys];
    for_each_composition(n as u64, cells, |counts| {
        cx.iter_mut().for_each(|v| *v = 0);
        cy.iter_mut().for_each(|v| *v = 0);
        for (c, &k) in counts.iter().enumerate() {
            cx[c / ys] += k;
            cy[c % ys] += k;
        }
        let accept = counts_typical(&cx, n as u64, &px, delta) && counts_typical(&cy, n as u64, &py, delta);
        let class = lf.log2_multinomial(counts);
        let weight = |l: &[f64]| {
            let mut s = class;
            for (&k, &lp) in counts.iter().zip(l) {
                if k > 0 {
                    s += k as f64 * lp;
                }
            }
            s
        };
        if accept {
            accept1.add(weight(&l1));
        } else {
            reject0.add(weight(&l0));
        }
    });
    let log2_beta = accept1.value();
    Ok(OneBitResult {
        n,
        delta,
        alpha: reject0.value().exp2().min(1.0),
        beta: log2_beta.exp2().min(1.0),
        log2_beta,
        slope: -log2_beta / n as f64,
        joint_types: count,
    })
}
