//! Finite-alphabet probability arithmetic.
//!
//! Pmfs, dense joint tensors over named axes, stochastic channels, and the
//! information measures built on them. Every logarithm is base 2, so all
//! measures are in bits. `0 log 0 = 0` and `0 log (0/0) = 0` throughout; a
//! divergence with a support violation evaluates to `f64::INFINITY`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest deviation of a weight sum from 1 accepted on input.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Negative weights above this are treated as rounding and clamped to zero.
pub const NEGATIVE_TOL: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("empty weight vector")]
    Empty,
    #[error("negative mass {value} at index {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error("duplicate axis `{0}`")]
    DuplicateAxis(String),
    #[error("axis groups overlap on `{0}`")]
    OverlappingAxes(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, ProbError>;

/// Clamp rounding negatives, check the sum and renormalize.
fn normalize(mut weights: Vec<f64>) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(ProbError::Empty);
    }
    for (index, w) in weights.iter_mut().enumerate() {
        if !w.is_finite() || *w < -NEGATIVE_TOL {
            return Err(ProbError::NegativeMass { index, value: *w });
        }
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(ProbError::NotNormalized { sum });
    }
    if sum != 1.0 {
        weights.iter_mut().for_each(|w| *w /= sum);
    }
    Ok(weights)
}

/// `p log2(p / q)` with the usual conventions at zero.
#[inline]
pub(crate) fn kl_term(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if q <= 0.0 {
        f64::INFINITY
    } else {
        p * (p / q).log2()
    }
}

#[inline]
fn neg_plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    neg_plogp(p) + neg_plogp(1.0 - p)
}

/// A probability mass function on `{0, .., k-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    weights: Vec<f64>,
}

impl Pmf {
    /// Validates and normalizes `weights`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Ok(Self {
            weights: normalize(weights)?,
        })
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "uniform pmf over an empty alphabet");
        Self {
            weights: vec![1.0 / size as f64; size],
        }
    }

    pub fn point(size: usize, at: usize) -> Self {
        assert!(at < size);
        let mut weights = vec![0.0; size];
        weights[at] = 1.0;
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn entropy(&self) -> f64 {
        self.weights.iter().map(|&p| neg_plogp(p)).sum()
    }

    /// View as a one-axis joint.
    pub fn into_joint(self, axis: &str) -> JointPmf {
        JointPmf {
            axes: vec![Axis::new(axis, self.weights.len())],
            weights: self.weights,
        }
    }
}

/// `make_pmf`: build a validated pmf.
pub fn make_pmf(weights: &[f64]) -> Result<Pmf> {
    Pmf::new(weights.to_vec())
}

/// A named finite alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Self {
            name: name.into(),
            size,
        }
    }
}

fn check_unique(axes: &[Axis]) -> Result<()> {
    for (i, a) in axes.iter().enumerate() {
        if a.size == 0 {
            return Err(ProbError::ShapeMismatch(format!("axis `{}` has size 0", a.name)));
        }
        if axes[..i].iter().any(|b| b.name == a.name) {
            return Err(ProbError::DuplicateAxis(a.name.clone()));
        }
    }
    Ok(())
}

/// Row-major strides for a list of sizes.
pub(crate) fn strides(sizes: &[usize]) -> Vec<usize> {
    let mut s = vec![1; sizes.len()];
    for i in (0..sizes.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * sizes[i + 1];
    }
    s
}

/// For every cell of a row-major tensor with `sizes`, the flat index of the
/// cell it lands on in the marginal over the axes `keep` (in that order).
pub(crate) fn projection_index(sizes: &[usize], keep: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().product();
    let kept_sizes: Vec<usize> = keep.iter().map(|&k| sizes[k]).collect();
    let kept_strides = strides(&kept_sizes);
    // stride of each source axis inside the target tensor (0 when summed out)
    let mut target_stride = vec![0usize; sizes.len()];
    for (j, &k) in keep.iter().enumerate() {
        target_stride[k] = kept_strides[j];
    }
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; sizes.len()];
    let mut t = 0usize;
    for _ in 0..total {
        out.push(t);
        // odometer increment, keeping `t` in sync
        for ax in (0..sizes.len()).rev() {
            idx[ax] += 1;
            t += target_stride[ax];
            if idx[ax] < sizes[ax] {
                break;
            }
            t -= target_stride[ax] * sizes[ax];
            idx[ax] = 0;
        }
    }
    out
}

/// Sum `weights` into a marginal with `len` cells following `map`.
pub(crate) fn accumulate(weights: &[f64], map: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (w, &t) in weights.iter().zip(map) {
        out[t] += w;
    }
}

/// A joint pmf over an ordered list of named axes, stored dense and row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    axes: Vec<Axis>,
    weights: Vec<f64>,
}

impl JointPmf {
    pub fn new(axes: Vec<Axis>, weights: Vec<f64>) -> Result<Self> {
        check_unique(&axes)?;
        let cells: usize = axes.iter().map(|a| a.size).product();
        if axes.is_empty() {
            return Err(ProbError::Empty);
        }
        if cells != weights.len() {
            return Err(ProbError::ShapeMismatch(format!(
                "{} weights for {} cells",
                weights.len(),
                cells
            )));
        }
        Ok(Self {
            axes,
            weights: normalize(weights)?,
        })
    }

    /// Internal constructor for already-normalized data.
    pub(crate) fn from_parts(axes: Vec<Axis>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(axes.iter().map(|a| a.size).product::<usize>(), weights.len());
        Self { axes, weights }
    }

    /// Two-axis joint from a matrix (rows index `row_axis`).
    pub fn from_matrix(rows: &[Vec<f64>], row_axis: &str, col_axis: &str) -> Result<Self> {
        let ncols = rows.first().map(|r| r.len()).ok_or(ProbError::Empty)?;
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(ProbError::ShapeMismatch("ragged matrix".into()));
        }
        let weights = rows.iter().flatten().copied().collect();
        Self::new(
            vec![Axis::new(row_axis, rows.len()), Axis::new(col_axis, ncols)],
            weights,
        )
    }

    /// Product measure of independent pmfs, one per named axis.
    pub fn product(factors: &[(&str, &Pmf)]) -> Result<Self> {
        let axes: Vec<Axis> = factors.iter().map(|(n, p)| Axis::new(*n, p.len())).collect();
        check_unique(&axes)?;
        let mut weights = vec![1.0];
        for (_, p) in factors {
            weights = weights
                .iter()
                .flat_map(|&w| p.weights().iter().map(move |&q| w * q))
                .collect();
        }
        Ok(Self { axes, weights })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn axis_position(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| ProbError::UnknownAxis(name.to_string()))
    }

    pub(crate) fn positions(&self, names: &[&str]) -> Result<Vec<usize>> {
        let pos = names
            .iter()
            .map(|n| self.axis_position(n))
            .collect::<Result<Vec<_>>>()?;
        for (i, p) in pos.iter().enumerate() {
            if pos[..i].contains(p) {
                return Err(ProbError::DuplicateAxis(names[i].to_string()));
            }
        }
        Ok(pos)
    }

    /// Probability of one cell given its multi-index.
    pub fn get(&self, index: &[usize]) -> f64 {
        let s = strides(&self.sizes());
        self.weights[index.iter().zip(&s).map(|(i, s)| i * s).sum::<usize>()]
    }

    /// Sum out every axis not in `keep`; the result's axes follow `keep`'s order.
    pub fn marginalize(&self, keep: &[&str]) -> Result<JointPmf> {
        if keep.is_empty() {
            return Err(ProbError::Empty);
        }
        let pos = self.positions(keep)?;
        Ok(self.marginal_by_position(&pos))
    }

    pub(crate) fn marginal_by_position(&self, pos: &[usize]) -> JointPmf {
        let map = projection_index(&self.sizes(), pos);
        let axes: Vec<Axis> = pos.iter().map(|&p| self.axes[p].clone()).collect();
        let mut out = vec![0.0; axes.iter().map(|a| a.size).product()];
        accumulate(&self.weights, &map, &mut out);
        JointPmf { axes, weights: out }
    }

    /// Marginal of a single axis as a plain pmf.
    pub fn marginal_pmf(&self, axis: &str) -> Result<Pmf> {
        let m = self.marginalize(&[axis])?;
        Ok(Pmf { weights: m.weights })
    }

    pub fn entropy(&self) -> f64 {
        self.weights.iter().map(|&p| neg_plogp(p)).sum()
    }

    /// Entropy of the marginal over `axes` (zero for the empty set).
    pub fn entropy_of(&self, axes: &[&str]) -> Result<f64> {
        if axes.is_empty() {
            return Ok(0.0);
        }
        Ok(self.marginalize(axes)?.entropy())
    }

    /// Rename an axis in place.
    pub fn rename_axis(&mut self, from: &str, to: &str) -> Result<()> {
        let p = self.axis_position(from)?;
        if from != to && self.axes.iter().any(|a| a.name == to) {
            return Err(ProbError::DuplicateAxis(to.to_string()));
        }
        self.axes[p].name = to.to_string();
        Ok(())
    }

    /// Product of the single-axis marginals of a two-axis joint, keeping the
    /// axis names. For `P_XY` this is `P_X P_Y`.
    pub fn product_of_marginals(&self) -> JointPmf {
        let marginals: Vec<Pmf> = (0..self.axes.len())
            .map(|i| Pmf {
                weights: self.marginal_by_position(&[i]).weights,
            })
            .collect();
        let factors: Vec<(&str, &Pmf)> = self
            .axes
            .iter()
            .zip(&marginals)
            .map(|(a, p)| (a.name.as_str(), p))
            .collect();
        JointPmf::product(&factors).expect("axes already unique")
    }
}

/// Anything with a mass vector and a shape that can be compared.
pub trait Measure {
    fn masses(&self) -> &[f64];
    fn same_shape(&self, other: &Self) -> bool;
}

impl Measure for Pmf {
    fn masses(&self) -> &[f64] {
        &self.weights
    }
    fn same_shape(&self, other: &Self) -> bool {
        self.len() == other.len()
    }
}

impl Measure for JointPmf {
    fn masses(&self) -> &[f64] {
        &self.weights
    }
    fn same_shape(&self, other: &Self) -> bool {
        self.axes == other.axes
    }
}

pub fn entropy(p: &Pmf) -> f64 {
    p.entropy()
}

/// `D(p || q)` in bits; `f64::INFINITY` when `p` is not absolutely continuous
/// with respect to `q`.
pub fn kl_div<M: Measure>(p: &M, q: &M) -> Result<f64> {
    if !p.same_shape(q) {
        return Err(ProbError::ShapeMismatch("kl_div arguments differ in shape".into()));
    }
    Ok(kl_slices(p.masses(), q.masses()))
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let t = kl_term(a, b);
        if t.is_infinite() {
            return f64::INFINITY;
        }
        d += t;
    }
    d.max(0.0)
}

fn check_disjoint(groups: &[&[&str]]) -> Result<()> {
    for (i, g) in groups.iter().enumerate() {
        for name in g.iter() {
            for h in &groups[i + 1..] {
                if h.contains(name) {
                    return Err(ProbError::OverlappingAxes(name.to_string()));
                }
            }
        }
    }
    Ok(())
}

/// `H(target | given)` in bits.
pub fn conditional_entropy(joint: &JointPmf, target: &[&str], given: &[&str]) -> Result<f64> {
    check_disjoint(&[target, given])?;
    joint.positions(target)?;
    let both: Vec<&str> = target.iter().chain(given).copied().collect();
    Ok(joint.entropy_of(&both)? - joint.entropy_of(given)?)
}

/// `I(A; B)` in bits.
pub fn mutual_information(joint: &JointPmf, a: &[&str], b: &[&str]) -> Result<f64> {
    conditional_mutual_information(joint, a, b, &[])
}

/// `I(A; B | C)` in bits, evaluated as a divergence sum on the `(A, B, C)`
/// marginal. Zero whenever `A` or `B` is empty or has a single-letter
/// alphabet.
pub fn conditional_mutual_information(
    joint: &JointPmf,
    a: &[&str],
    b: &[&str],
    c: &[&str],
) -> Result<f64> {
    check_disjoint(&[a, b, c])?;
    let pa = joint.positions(a)?;
    let pb = joint.positions(b)?;
    let pc = joint.positions(c)?;
    Ok(cmi_by_position(joint.weights(), &joint.sizes(), &pa, &pb, &pc))
}

/// Index plan for evaluating `I(A; B | C)` repeatedly on tensors of one shape.
#[derive(Debug, Clone)]
pub(crate) struct CmiPlan {
    trivial: bool,
    abc: Vec<usize>,
    ac: Vec<usize>,
    bc: Vec<usize>,
    c: Vec<usize>,
    n_abc: usize,
    n_ac: usize,
    n_bc: usize,
    n_c: usize,
}

impl CmiPlan {
    pub(crate) fn new(sizes: &[usize], a: &[usize], b: &[usize], c: &[usize]) -> Self {
        let size_of = |axes: &[usize]| axes.iter().map(|&i| sizes[i]).product::<usize>();
        let trivial = size_of(a) <= 1 || size_of(b) <= 1;
        let cat = |parts: &[&[usize]]| parts.concat();
        let abc_axes = cat(&[a, b, c]);
        let ac_axes = cat(&[a, c]);
        let bc_axes = cat(&[b, c]);
        // maps from the (A,B,C) marginal onto its own sub-marginals
        let abc_sizes: Vec<usize> = abc_axes.iter().map(|&i| sizes[i]).collect();
        let (na, nb, nc) = (a.len(), b.len(), c.len());
        let local_ac: Vec<usize> = (0..na).chain(na + nb..na + nb + nc).collect();
        let local_bc: Vec<usize> = (na..na + nb + nc).collect();
        let local_c: Vec<usize> = (na + nb..na + nb + nc).collect();
        Self {
            trivial,
            abc: projection_index(sizes, &abc_axes),
            ac: projection_index(&abc_sizes, &local_ac),
            bc: projection_index(&abc_sizes, &local_bc),
            c: projection_index(&abc_sizes, &local_c),
            n_abc: size_of(&abc_axes),
            n_ac: size_of(&ac_axes),
            n_bc: size_of(&bc_axes),
            n_c: size_of(c),
        }
    }

    pub(crate) fn eval(&self, weights: &[f64]) -> f64 {
        if self.trivial {
            return 0.0;
        }
        let mut abc = vec![0.0; self.n_abc];
        accumulate(weights, &self.abc, &mut abc);
        let mut ac = vec![0.0; self.n_ac];
        let mut bc = vec![0.0; self.n_bc];
        let mut c = vec![0.0; self.n_c];
        accumulate(&abc, &self.ac, &mut ac);
        accumulate(&abc, &self.bc, &mut bc);
        accumulate(&abc, &self.c, &mut c);
        let mut total = 0.0;
        for (i, &p) in abc.iter().enumerate() {
            if p > 0.0 {
                total += p * (p * c[self.c[i]] / (ac[self.ac[i]] * bc[self.bc[i]])).log2();
            }
        }
        total.max(0.0)
    }
}

pub(crate) fn cmi_by_position(
    weights: &[f64],
    sizes: &[usize],
    a: &[usize],
    b: &[usize],
    c: &[usize],
) -> f64 {
    CmiPlan::new(sizes, a, b, c).eval(weights)
}

/// A stochastic mapping from the joint alphabet of `inputs` to `output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    inputs: Vec<Axis>,
    output: Axis,
    /// Row-major: one row of `output.size` probabilities per input symbol.
    rows: Vec<f64>,
}

impl Channel {
    /// `rows` holds one pmf per joint input symbol, in row-major input order.
    pub fn new(inputs: Vec<Axis>, output: Axis, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut all = inputs.clone();
        all.push(output.clone());
        check_unique(&all)?;
        let nrows: usize = inputs.iter().map(|a| a.size).product();
        if rows.len() != nrows {
            return Err(ProbError::ShapeMismatch(format!(
                "{} rows for {} input symbols",
                rows.len(),
                nrows
            )));
        }
        let mut flat = Vec::with_capacity(nrows * output.size);
        for row in rows {
            if row.len() != output.size {
                return Err(ProbError::ShapeMismatch(format!(
                    "row of length {} for output alphabet {}",
                    row.len(),
                    output.size
                )));
            }
            flat.extend(normalize(row)?);
        }
        Ok(Self {
            inputs,
            output,
            rows: flat,
        })
    }

    /// Build from a function of the input multi-index.
    pub fn from_fn(
        inputs: Vec<Axis>,
        output: Axis,
        mut f: impl FnMut(&[usize]) -> Vec<f64>,
    ) -> Result<Self> {
        let sizes: Vec<usize> = inputs.iter().map(|a| a.size).collect();
        let nrows: usize = sizes.iter().product();
        let mut idx = vec![0usize; sizes.len()];
        let mut rows = Vec::with_capacity(nrows);
        for _ in 0..nrows {
            rows.push(f(&idx));
            for ax in (0..sizes.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < sizes[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self::new(inputs, output, rows)
    }

    /// Output copies the (single) input symbol.
    pub fn identity(input: Axis, output: &str) -> Self {
        let k = input.size;
        Self::from_fn(vec![input], Axis::new(output, k), |i| {
            let mut r = vec![0.0; k];
            r[i[0]] = 1.0;
            r
        })
        .expect("identity rows are valid")
    }

    /// Same output pmf for every input.
    pub fn constant(inputs: Vec<Axis>, output: &str, pmf: &Pmf) -> Result<Self> {
        let out = Axis::new(output, pmf.len());
        Self::from_fn(inputs, out, |_| pmf.weights().to_vec())
    }

    pub fn inputs(&self) -> &[Axis] {
        &self.inputs
    }

    pub fn output(&self) -> &Axis {
        &self.output
    }

    pub fn row_count(&self) -> usize {
        self.rows.len() / self.output.size
    }

    /// Row for a flat input index.
    pub fn row(&self, input: usize) -> &[f64] {
        let k = self.output.size;
        &self.rows[input * k..(input + 1) * k]
    }

    pub(crate) fn flat_rows(&self) -> &[f64] {
        &self.rows
    }

    pub(crate) fn flat_rows_mut(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn prob(&self, inputs: &[usize], out: usize) -> f64 {
        let s = strides(&self.inputs.iter().map(|a| a.size).collect::<Vec<_>>());
        let r: usize = inputs.iter().zip(&s).map(|(i, s)| i * s).sum();
        self.row(r)[out]
    }

    pub(crate) fn same_signature(&self, other: &Channel) -> bool {
        self.inputs == other.inputs && self.output == other.output
    }
}

/// `D(P_{Y|X} || Q_{Y|X} | P_X)` in bits. Rows with zero base mass contribute
/// nothing.
pub fn conditional_kl(p: &Channel, q: &Channel, base: &JointPmf) -> Result<f64> {
    if !p.same_signature(q) {
        return Err(ProbError::ShapeMismatch("channels differ in signature".into()));
    }
    if base.axes() != p.inputs() {
        return Err(ProbError::ShapeMismatch(
            "base measure axes must equal the channel inputs".into(),
        ));
    }
    let mut total = 0.0;
    for (r, &w) in base.weights().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let d = kl_slices(p.row(r), q.row(r));
        if d.is_infinite() {
            return Ok(f64::INFINITY);
        }
        total += w * d;
    }
    Ok(total)
}

/// Append the channel's output axis: `P(base, out) = P(base) W(out | inputs)`.
pub fn chain(base: &JointPmf, ch: &Channel) -> Result<JointPmf> {
    if base.axes.iter().any(|a| a.name == ch.output.name) {
        return Err(ProbError::DuplicateAxis(ch.output.name.clone()));
    }
    let mut in_pos = Vec::with_capacity(ch.inputs.len());
    for a in &ch.inputs {
        let p = base.axis_position(&a.name)?;
        if base.axes[p].size != a.size {
            return Err(ProbError::ShapeMismatch(format!(
                "axis `{}` has size {} in base but {} in channel",
                a.name, base.axes[p].size, a.size
            )));
        }
        in_pos.push(p);
    }
    let row_of = projection_index(&base.sizes(), &in_pos);
    let k = ch.output.size;
    let mut weights = Vec::with_capacity(base.weights.len() * k);
    for (&w, &r) in base.weights.iter().zip(&row_of) {
        weights.extend(ch.row(r).iter().map(|&c| w * c));
    }
    let mut axes = base.axes.clone();
    axes.push(ch.output.clone());
    Ok(JointPmf { axes, weights })
}
