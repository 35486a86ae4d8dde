//! Method-of-types utilities: empirical types, type enumeration and counting,
//! type-class sizes, i.i.d. sequence probabilities and δ-typicality.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::{kl_slices, Measure, Pmf};

/// Default cap on the number of types `enumerate_types` will materialize.
pub const DEFAULT_TYPE_CAP: u64 = 10_000_000;

/// Slack absorbing rounding in `count / n` against a reference probability.
const TYPICALITY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypeError {
    #[error("symbol {symbol} at position {position} is outside an alphabet of size {size}")]
    SymbolOutOfRange {
        position: usize,
        symbol: usize,
        size: usize,
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("{what} needs {needed} items, cap is {cap}")]
    SizeGuard { what: &'static str, needed: u64, cap: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid typicality slack {0}")]
    InvalidDelta(f64),
}

pub type Result<T> = std::result::Result<T, TypeError>;

/// Counts of a length-`n` sequence over a (possibly product) alphabet.
///
/// `dims` lists the factor alphabet sizes; counts are stored row-major over
/// their product, so a pair type over `X × Y` has `dims = [|X|, |Y|]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeStats {
    n: u64,
    dims: Vec<usize>,
    counts: Vec<u64>,
}

impl TypeStats {
    pub fn from_counts(dims: Vec<usize>, counts: Vec<u64>) -> Result<Self> {
        let cells: usize = dims.iter().product();
        if cells != counts.len() || cells == 0 {
            return Err(TypeError::ShapeMismatch(format!(
                "{} counts for {} cells",
                counts.len(),
                cells
            )));
        }
        let n = counts.iter().sum();
        if n == 0 {
            return Err(TypeError::EmptySequence);
        }
        Ok(Self { n, dims, counts })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// The empirical measure `counts / n`.
    pub fn empirical(&self) -> Pmf {
        let n = self.n as f64;
        Pmf::new(self.counts.iter().map(|&c| c as f64 / n).collect())
            .expect("counts sum to n")
    }

    pub fn entropy(&self) -> f64 {
        self.empirical().entropy()
    }

    /// Marginal type over one factor of a product alphabet.
    pub fn marginal(&self, factor: usize) -> TypeStats {
        let sizes = &self.dims;
        let map = crate::prob::projection_index(sizes, &[factor]);
        let mut counts = vec![0u64; sizes[factor]];
        for (c, &t) in self.counts.iter().zip(&map) {
            counts[t] += c;
        }
        TypeStats {
            n: self.n,
            dims: vec![sizes[factor]],
            counts,
        }
    }
}

/// Type of a single sequence.
pub fn empirical_type(seq: &[usize], alphabet_size: usize) -> Result<TypeStats> {
    joint_type(&[seq], &[alphabet_size])
}

/// Joint type of equally long sequences over the product of their alphabets.
pub fn joint_type(seqs: &[&[usize]], sizes: &[usize]) -> Result<TypeStats> {
    if seqs.len() != sizes.len() || seqs.is_empty() {
        return Err(TypeError::ShapeMismatch(
            "one alphabet size per sequence".into(),
        ));
    }
    let n = seqs[0].len();
    if n == 0 {
        return Err(TypeError::EmptySequence);
    }
    if seqs.iter().any(|s| s.len() != n) {
        return Err(TypeError::ShapeMismatch("sequences differ in length".into()));
    }
    let strides = crate::prob::strides(sizes);
    let mut counts = vec![0u64; sizes.iter().product()];
    for i in 0..n {
        let mut cell = 0;
        for ((s, &size), &stride) in seqs.iter().zip(sizes).zip(&strides) {
            let sym = s[i];
            if sym >= size {
                return Err(TypeError::SymbolOutOfRange {
                    position: i,
                    symbol: sym,
                    size,
                });
            }
            cell += sym * stride;
        }
        counts[cell] += 1;
    }
    Ok(TypeStats {
        n: n as u64,
        dims: sizes.to_vec(),
        counts,
    })
}

/// `C(n + k - 1, k - 1)`, saturating.
pub fn type_count(n: u64, alphabet_size: usize) -> u64 {
    binomial(n + alphabet_size as u64 - 1, alphabet_size as u64 - 1).unwrap_or(u64::MAX)
}

fn binomial(m: u64, k: u64) -> Option<u64> {
    let k = k.min(m - k.min(m));
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.checked_mul((m - i) as u128)? / (i as u128 + 1);
    }
    u64::try_from(r).ok()
}

/// All compositions of `n` into `alphabet_size` parts, lexicographic in the
/// count vector.
pub fn enumerate_types(n: u64, alphabet_size: usize) -> Result<Vec<TypeStats>> {
    enumerate_types_capped(n, alphabet_size, DEFAULT_TYPE_CAP)
}

pub fn enumerate_types_capped(n: u64, alphabet_size: usize, cap: u64) -> Result<Vec<TypeStats>> {
    if n == 0 {
        return Err(TypeError::EmptySequence);
    }
    if alphabet_size == 0 {
        return Err(TypeError::ShapeMismatch("empty alphabet".into()));
    }
    let needed = type_count(n, alphabet_size);
    if needed > cap {
        return Err(TypeError::SizeGuard {
            what: "type enumeration",
            needed,
            cap,
        });
    }
    let mut out = Vec::with_capacity(needed as usize);
    for_each_composition(n, alphabet_size, |c| {
        out.push(TypeStats {
            n,
            dims: vec![alphabet_size],
            counts: c.to_vec(),
        })
    });
    Ok(out)
}

/// Visit every composition of `n` into `parts` parts in lexicographic order
/// without allocating per item.
pub fn for_each_composition(n: u64, parts: usize, mut f: impl FnMut(&[u64])) {
    fn rec(buf: &mut Vec<u64>, left: u64, parts: usize, f: &mut impl FnMut(&[u64])) {
        if buf.len() + 1 == parts {
            buf.push(left);
            f(buf);
            buf.pop();
            return;
        }
        for c in 0..=left {
            buf.push(c);
            rec(buf, left - c, parts, f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(parts);
    rec(&mut buf, n, parts, &mut f);
}

/// Size of a type class: exact when it fits below `2^63`, always in log2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSize {
    pub exact: Option<u64>,
    pub log2: f64,
}

/// `log2(k!)` for `k` in `0..=max`.
#[derive(Debug, Clone)]
pub struct LogFactorials(Vec<f64>);

impl LogFactorials {
    pub fn new(max: u64) -> Self {
        let mut t = Vec::with_capacity(max as usize + 1);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..=max {
            acc += (k as f64).log2();
            t.push(acc);
        }
        Self(t)
    }

    #[inline]
    pub fn get(&self, k: u64) -> f64 {
        self.0[k as usize]
    }

    /// `log2` of the multinomial coefficient `n! / prod(counts!)`.
    pub fn log2_multinomial(&self, counts: &[u64]) -> f64 {
        let n: u64 = counts.iter().sum();
        self.get(n) - counts.iter().map(|&c| self.get(c)).sum::<f64>()
    }
}

/// Multinomial coefficient `n! / prod(counts!)`.
pub fn type_class_size(t: &TypeStats) -> ClassSize {
    let lf = LogFactorials::new(t.n);
    let log2 = lf.log2_multinomial(&t.counts);
    let mut exact: Option<u128> = Some(1);
    let mut placed = 0u64;
    for &c in &t.counts {
        placed += c;
        exact = exact.and_then(|e| {
            binomial(placed, c).and_then(|b| e.checked_mul(b as u128))
        });
    }
    let exact = exact
        .filter(|&e| e < (1u128 << 63))
        .map(|e| e as u64);
    ClassSize { exact, log2 }
}

/// `log2 P^n(x)` for any sequence `x` of type `t`:
/// `-n (H(t) + D(t || p))`, or `-inf` on a support violation.
pub fn iid_log_prob(t: &TypeStats, p: &Pmf) -> Result<f64> {
    if p.len() != t.alphabet_size() {
        return Err(TypeError::ShapeMismatch(format!(
            "type over {} letters, pmf over {}",
            t.alphabet_size(),
            p.len()
        )));
    }
    let emp = t.empirical();
    let d = kl_slices(emp.weights(), p.weights());
    if d.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let by_type = -(t.n as f64) * (emp.entropy() + d);
    debug_assert!({
        let direct: f64 = t
            .counts
            .iter()
            .zip(p.weights())
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &q)| c as f64 * q.log2())
            .sum();
        (direct - by_type).abs() <= 1e-10 * direct.abs().max(1.0)
    });
    Ok(by_type)
}

/// How a type is compared with its reference measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypicalityMode {
    /// Single alphabet.
    Marginal,
    /// Product alphabet, compared cell by cell.
    Joint,
    /// Product alphabet whose first factor is the conditioning symbol; the
    /// conditional empirical measure of each observed base symbol is
    /// compared with the reference conditional.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub delta: f64,
    pub mode: TypicalityMode,
}

impl TypicalityParams {
    pub fn marginal(delta: f64) -> Self {
        Self {
            delta,
            mode: TypicalityMode::Marginal,
        }
    }

    pub fn joint(delta: f64) -> Self {
        Self {
            delta,
            mode: TypicalityMode::Joint,
        }
    }

    pub fn conditional(delta: f64) -> Self {
        Self {
            delta,
            mode: TypicalityMode::Conditional,
        }
    }
}

/// δ-typicality: `|N(a)/n - P(a)| <= δ` for every letter and no letter
/// observed outside the support of `P`.
pub fn is_typical<M: Measure>(t: &TypeStats, p: &M, params: TypicalityParams) -> Result<bool> {
    let delta = params.delta;
    if !(delta >= 0.0) {
        return Err(TypeError::InvalidDelta(delta));
    }
    let ref_w = p.masses();
    if ref_w.len() != t.alphabet_size() {
        return Err(TypeError::ShapeMismatch(format!(
            "type over {} letters, reference over {}",
            t.alphabet_size(),
            ref_w.len()
        )));
    }
    match params.mode {
        TypicalityMode::Marginal | TypicalityMode::Joint => {
            Ok(counts_typical(&t.counts, t.n, ref_w, delta))
        }
        TypicalityMode::Conditional => {
            if t.dims.len() < 2 {
                return Err(TypeError::ShapeMismatch(
                    "conditional typicality needs a product alphabet".into(),
                ));
            }
            let rows = t.dims[0];
            let width = t.alphabet_size() / rows;
            for a in 0..rows {
                let cnt = &t.counts[a * width..(a + 1) * width];
                let na: u64 = cnt.iter().sum();
                if na == 0 {
                    continue;
                }
                let pr = &ref_w[a * width..(a + 1) * width];
                let pa: f64 = pr.iter().sum();
                if pa <= 0.0 {
                    return Ok(false);
                }
                let cond: Vec<f64> = pr.iter().map(|&w| w / pa).collect();
                if !counts_typical(cnt, na, &cond, delta) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Core δ-typicality test on raw counts.
#[inline]
pub(crate) fn counts_typical(counts: &[u64], n: u64, reference: &[f64], delta: f64) -> bool {
    let n = n as f64;
    counts.iter().zip(reference).all(|(&c, &p)| {
        if p <= 0.0 {
            c == 0
        } else {
            (c as f64 / n - p).abs() <= delta + TYPICALITY_EPS
        }
    })
}
