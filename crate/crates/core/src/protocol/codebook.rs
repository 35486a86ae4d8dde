//! Nested random codebooks.
//!
//! Message `j` (exchange order `U1, V1, U2, ..`) has one book of `M_j` words
//! for every combination of earlier message indices. Each word is drawn
//! i.i.d. from the H0 conditional of message `j` given the symbols of its
//! parent words at the same position, from its own seed path, so a word does
//! not depend on how many others were drawn.

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::{guard, Deltas, ProtocolError};
use crate::exponent::{rate_of, ChannelStack};
use crate::prob::{self, projection_index, JointPmf};
use crate::seed::SeedPath;

/// Total stored symbols allowed across all books.
pub const SYMBOL_CAP: f64 = 268_435_456.0; // 2^28

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebooks {
    n: usize,
    seed: u64,
    /// Rates in bits per symbol, per message.
    rates: Vec<f64>,
    sizes: Vec<usize>,
    alphabets: Vec<usize>,
    /// Per message: words laid out as `[parent prefix][index][position]`.
    words: Vec<Vec<u8>>,
}

impl Codebooks {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Words per book, per message.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn alphabets(&self) -> &[usize] {
        &self.alphabets
    }

    pub fn messages(&self) -> usize {
        self.sizes.len()
    }

    /// Word `m` of message `j` in the book selected by the earlier indices
    /// `prefix` (one per earlier message).
    pub fn word(&self, j: usize, prefix: &[usize], m: usize) -> &[u8] {
        debug_assert_eq!(prefix.len(), j);
        let mut book = 0;
        for (i, &p) in prefix.iter().enumerate() {
            book = book * self.sizes[i] + p;
        }
        let at = (book * self.sizes[j] + m) * self.n;
        &self.words[j][at..at + self.n]
    }

    /// `(1/n) log2` of the number of distinct exchanges.
    pub fn exchanged_rate(&self) -> f64 {
        self.sizes.iter().map(|&m| (m as f64).log2()).sum::<f64>() / self.n as f64
    }
}

/// `I(msg_j; own observation | earlier messages) + eps_j` per message, with
/// `eps_j = delta |U_k| |X|` for forward and `delta_b |V_k| |Y|` for backward
/// messages; zero for single-letter messages.
pub fn message_rates(
    p_h0: &JointPmf,
    stack: &ChannelStack,
    deltas: &Deltas,
) -> Result<Vec<f64>, ProtocolError> {
    let j = stack.joint(&canon(p_h0, stack)?)?;
    let names = stack.message_names();
    let mut out = Vec::with_capacity(names.len());
    for (m, name) in names.iter().enumerate() {
        let past: Vec<&str> = names[..m].iter().map(String::as_str).collect();
        let size = j.axes()[2 + m].size;
        let (own, own_size, d) = if m % 2 == 0 {
            ("X", stack.x_size(), deltas.delta)
        } else {
            ("Y", stack.y_size(), deltas.delta_b)
        };
        let info = prob::conditional_mutual_information(&j, &[name.as_str()], &[own], &past)?;
        let eps = if size > 1 { d * (size * own_size) as f64 } else { 0.0 };
        out.push(info + eps);
    }
    debug_assert!({
        let total: f64 = out.iter().sum();
        total + 1e-9 >= rate_of(stack, p_h0).unwrap_or(0.0)
    });
    Ok(out)
}

fn canon(p_h0: &JointPmf, stack: &ChannelStack) -> Result<JointPmf, ProtocolError> {
    if p_h0.sizes() != [stack.x_size(), stack.y_size()] {
        return Err(ProtocolError::ShapeMismatch(
            "H0 joint does not match the stack's observation alphabets".into(),
        ));
    }
    let mut p = p_h0.clone();
    let names: Vec<String> = p.axes().iter().map(|a| a.name.clone()).collect();
    if names != ["X", "Y"] {
        // go through a temporary name in case the axes are called (Y, X)
        p.rename_axis(&names[0], "\u{0}x")?;
        p.rename_axis(&names[1], "Y")?;
        p.rename_axis("\u{0}x", "X")?;
    }
    Ok(p)
}

/// Codebooks at the rates of [`message_rates`].
pub fn build_codebooks(
    p_h0: &JointPmf,
    stack: &ChannelStack,
    n: usize,
    deltas: &Deltas,
    seed: u64,
) -> Result<Codebooks, ProtocolError> {
    deltas.validate()?;
    let rates = message_rates(p_h0, stack, deltas)?;
    build_codebooks_with_rates(p_h0, stack, n, &rates, seed)
}

/// Codebooks with `M_j = ceil(2^{n R_j})` words per book.
pub fn build_codebooks_with_rates(
    p_h0: &JointPmf,
    stack: &ChannelStack,
    n: usize,
    rates: &[f64],
    seed: u64,
) -> Result<Codebooks, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::InvalidInput("blocklength must be at least 1".into()));
    }
    let names = stack.message_names();
    if rates.len() != names.len() {
        return Err(ProtocolError::InvalidInput(format!(
            "{} rates given for {} messages",
            rates.len(),
            names.len()
        )));
    }
    if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(ProtocolError::InvalidInput(format!("invalid rate {r}")));
    }
    let joint = stack.joint(&canon(p_h0, stack)?)?;
    let alphabets: Vec<usize> = joint.axes()[2..].iter().map(|a| a.size).collect();
    if alphabets.iter().any(|&a| a > 256) {
        return Err(ProtocolError::InvalidInput("message alphabets are limited to 256 letters".into()));
    }

    // sizes and memory guard, in the log domain before anything is allocated
    let log_sizes: Vec<f64> = rates.iter().map(|r| n as f64 * r).collect();
    let mut log_books = 0.0;
    let mut total = 0.0f64;
    for &ls in &log_sizes {
        log_books += ls;
        total += (log_books + (n as f64).log2()).exp2();
    }
    guard("codebooks", total.log2(), SYMBOL_CAP.log2())?;
    // ceil(2^{nR}), ignoring rounding noise just above an integer
    let sizes: Vec<usize> = log_sizes
        .iter()
        .map(|&ls| {
            let v = ls.exp2();
            let r = v.round();
            if (v - r).abs() <= 1e-9 * r.max(1.0) {
                r as usize
            } else {
                v.ceil() as usize
            }
        })
        .collect();

    let sizes_all = joint.sizes();
    let path = SeedPath::new(seed, "codeword");
    let mut words = Vec::with_capacity(names.len());
    for j in 0..names.len() {
        // conditional of message j given the earlier message symbols
        let keep: Vec<usize> = (2..3 + j).collect();
        let map = projection_index(&sizes_all, &keep);
        let width = alphabets[j];
        let contexts: usize = alphabets[..j].iter().product();
        let mut marg = vec![0.0; contexts * width];
        prob::accumulate(joint.weights(), &map, &mut marg);
        let dists: Vec<Option<WeightedIndex<f64>>> = marg
            .chunks(width)
            .map(|row| WeightedIndex::new(row.iter().copied()).ok())
            .collect();

        let books: usize = sizes[..j].iter().product();
        let mut flat = Vec::with_capacity(books * sizes[j] * n);
        let mut prefix = vec![0usize; j];
        let mut parents: Vec<&[u8]> = Vec::with_capacity(j);
        for book in 0..books {
            // decode the book number into the parent prefix
            let mut b = book;
            for i in (0..j).rev() {
                prefix[i] = b % sizes[i];
                b /= sizes[i];
            }
            parents.clear();
            for i in 0..j {
                parents.push(word_in(&words, &sizes, n, i, &prefix[..i], prefix[i]));
            }
            for m in 0..sizes[j] {
                let mut rng = path.child(j as u64).child(book as u64).child(m as u64).rng();
                for pos in 0..n {
                    let mut ctx = 0;
                    for (i, w) in parents.iter().enumerate() {
                        ctx = ctx * alphabets[i] + w[pos] as usize;
                    }
                    let sym = match &dists[ctx] {
                        Some(d) => d.sample(&mut rng),
                        // a parent context H0 never produces; keep it simple
                        None => 0,
                    };
                    flat.push(sym as u8);
                }
            }
        }
        words.push(flat);
    }
    Ok(Codebooks {
        n,
        seed,
        rates: rates.to_vec(),
        sizes,
        alphabets,
        words,
    })
}

fn word_in<'w>(words: &'w [Vec<u8>], sizes: &[usize], n: usize, j: usize, prefix: &[usize], m: usize) -> &'w [u8] {
    let mut book = 0;
    for (i, &p) in prefix.iter().enumerate() {
        book = book * sizes[i] + p;
    }
    let at = (book * sizes[j] + m) * n;
    &words[j][at..at + n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::Cardinalities;
    use crate::seed::derive_rng;

    fn setup() -> (JointPmf, ChannelStack) {
        let p = JointPmf::from_matrix(&[vec![0.4, 0.1], vec![0.2, 0.3]], "X", "Y").unwrap();
        let s = ChannelStack::random(2, 2, &Cardinalities::uniform(2, 2, 1), &mut derive_rng(3, "t", &[])).unwrap();
        (p, s)
    }

    #[test]
    fn same_seed_same_books() {
        let (p, s) = setup();
        let d = Deltas::from_base(0.1);
        let a = build_codebooks(&p, &s, 5, &d, 9).unwrap();
        let b = build_codebooks(&p, &s, 5, &d, 9).unwrap();
        assert_eq!(a, b);
        let c = build_codebooks(&p, &s, 5, &d, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_rate_gives_one_word() {
        let (p, s) = setup();
        let b = build_codebooks_with_rates(&p, &s, 7, &[0.0, 0.5], 1).unwrap();
        assert_eq!(b.sizes(), &[1, 12]);
        assert_eq!(b.word(1, &[0], 11).len(), 7);
        let b = build_codebooks_with_rates(&p, &s, 4, &[0.5, 0.25], 1).unwrap();
        assert_eq!(b.sizes(), &[4, 2]);
    }

    #[test]
    fn size_guard_trips_before_allocation() {
        let (p, s) = setup();
        let e = build_codebooks_with_rates(&p, &s, 100, &[0.2, 0.2], 1).unwrap_err();
        assert!(matches!(e, ProtocolError::SizeGuard { .. }));
    }
}
