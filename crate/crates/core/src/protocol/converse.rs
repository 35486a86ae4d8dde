//! Numeric check of the multi-letter converse bound for testing against
//! independence with one round:
//! `(1 - alpha) log2(1/beta) - h2(alpha) <= I(I_A; Y^n) + I(I_B; X^n | I_A)`,
//! where `I_A = f(X^n)`, `I_B = g(I_A, Y^n)` and A decides from
//! `(X^n, I_B)`. Everything is computed exactly by enumeration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{for_each_sequence, guard, Neumaier, ProtocolError};
use crate::prob::{binary_entropy, conditional_mutual_information, Axis, JointPmf};

/// Sequence pairs allowed for enumeration.
const CODE_CAP: f64 = 65_536.0; // 2^16

/// Explicit one-round code at blocklength `n`. Sequences are indexed
/// row-major (first symbol most significant).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractiveCode {
    pub n: usize,
    pub x_size: usize,
    pub y_size: usize,
    pub f_size: usize,
    pub g_size: usize,
    /// `f[x]` in `0..f_size`.
    pub f: Vec<usize>,
    /// `g[i_a * |Y|^n + y]` in `0..g_size`.
    pub g: Vec<usize>,
    /// `accept[x * g_size + i_b]`: declare H0.
    pub accept: Vec<bool>,
}

impl InteractiveCode {
    fn seqs(n: usize, k: usize) -> usize {
        k.pow(n as u32)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let nx = Self::seqs(self.n, self.x_size);
        let ny = Self::seqs(self.n, self.y_size);
        let ok = self.f_size >= 1
            && self.g_size >= 1
            && self.f.len() == nx
            && self.g.len() == self.f_size * ny
            && self.accept.len() == nx * self.g_size
            && self.f.iter().all(|&v| v < self.f_size)
            && self.g.iter().all(|&v| v < self.g_size);
        if ok {
            Ok(())
        } else {
            Err(ProtocolError::InvalidInput("inconsistent code tables".into()))
        }
    }

    /// Uniformly random mappings.
    pub fn random<R: Rng>(n: usize, x_size: usize, y_size: usize, f_size: usize, g_size: usize, rng: &mut R) -> Self {
        let nx = Self::seqs(n, x_size);
        let ny = Self::seqs(n, y_size);
        Self {
            n,
            x_size,
            y_size,
            f_size,
            g_size,
            f: (0..nx).map(|_| rng.gen_range(0..f_size)).collect(),
            g: (0..f_size * ny).map(|_| rng.gen_range(0..g_size)).collect(),
            accept: (0..nx * g_size).map(|_| rng.gen_bool(0.5)).collect(),
        }
    }

    /// Always declares H0.
    pub fn constant(n: usize, x_size: usize, y_size: usize) -> Self {
        let nx = Self::seqs(n, x_size);
        Self {
            n,
            x_size,
            y_size,
            f_size: 1,
            g_size: 1,
            f: vec![0; nx],
            g: vec![0; Self::seqs(n, y_size)],
            accept: vec![true; nx],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverseCheckResult {
    pub alpha: f64,
    pub beta: f64,
    /// `I(I_A; Y^n)` in bits.
    pub info_a: f64,
    /// `I(I_B; X^n | I_A)` in bits.
    pub info_b: f64,
    pub lhs: f64,
    pub bound_rhs: f64,
    pub slack: f64,
}

fn seq_probs(n: usize, k: usize, p: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(k.pow(n as u32));
    for_each_sequence(n, k, |s| out.push(s.iter().map(|&a| p[a]).product()));
    out
}

/// Evaluate both sides on `p_xy` with H1 the product of its marginals.
pub fn converse_bound_check(code: &InteractiveCode, p_xy: &JointPmf) -> Result<ConverseCheckResult, ProtocolError> {
    code.validate()?;
    let (xs, ys, n) = (code.x_size, code.y_size, code.n);
    if p_xy.sizes() != [xs, ys] {
        return Err(ProtocolError::ShapeMismatch("joint does not match the code alphabets".into()));
    }
    guard("code enumeration", n as f64 * ((xs * ys) as f64).log2(), CODE_CAP.log2())?;
    let w = p_xy.weights();
    let mut px = vec![0.0; xs];
    let mut py = vec![0.0; ys];
    for (c, &v) in w.iter().enumerate() {
        px[c / ys] += v;
        py[c % ys] += v;
    }
    let qx = seq_probs(n, xs, &px);
    let qy = seq_probs(n, ys, &py);
    let nx = qx.len();
    let ny = qy.len();
    let mut xseqs = Vec::with_capacity(nx);
    for_each_sequence(n, xs, |s| xseqs.push(s.to_vec()));
    let mut yseqs = Vec::with_capacity(ny);
    for_each_sequence(n, ys, |s| yseqs.push(s.to_vec()));

    // P(I_A, Y^n) and P(X^n, I_A, I_B) under H0
    let mut a_y = vec![0.0; code.f_size * ny];
    let mut x_a_b = vec![0.0; nx * code.f_size * code.g_size];
    let mut alpha = Neumaier::default();
    let mut beta = Neumaier::default();
    for (xi, x) in xseqs.iter().enumerate() {
        let a = code.f[xi];
        for (yi, y) in yseqs.iter().enumerate() {
            let p: f64 = x.iter().zip(y).map(|(&s, &t)| w[s * ys + t]).product();
            let b = code.g[a * ny + yi];
            a_y[a * ny + yi] += p;
            x_a_b[(xi * code.f_size + a) * code.g_size + b] += p;
            if code.accept[xi * code.g_size + b] {
                beta.add(qx[xi] * qy[yi]);
            } else {
                alpha.add(p);
            }
        }
    }
    let (alpha, beta) = (alpha.value().clamp(0.0, 1.0), beta.value().clamp(0.0, 1.0));
    if beta <= 0.0 {
        return Err(ProtocolError::DegenerateCode);
    }
    let j_ay = JointPmf::new(vec![Axis::new("IA", code.f_size), Axis::new("Yn", ny)], a_y)?;
    let info_a = conditional_mutual_information(&j_ay, &["IA"], &["Yn"], &[])?;
    let j_xab = JointPmf::new(
        vec![
            Axis::new("Xn", nx),
            Axis::new("IA", code.f_size),
            Axis::new("IB", code.g_size),
        ],
        x_a_b,
    )?;
    let info_b = conditional_mutual_information(&j_xab, &["IB"], &["Xn"], &["IA"])?;
    // (1 - alpha) log2(1 / beta) with 0 * inf = 0
    let lhs = if alpha >= 1.0 { 0.0 } else { -(1.0 - alpha) * beta.log2() } - binary_entropy(alpha);
    let bound_rhs = info_a + info_b;
    Ok(ConverseCheckResult {
        alpha,
        beta,
        info_a,
        info_b,
        lhs,
        bound_rhs,
        slack: bound_rhs - lhs,
    })
}
