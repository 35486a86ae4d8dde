//! The interactive decision rule and its exact error probabilities.
//!
//! Message `j` is chosen by A for even `j` and by B for odd `j`. Before each
//! of its searches B first checks that the words received so far are jointly
//! typical with `y`. A search keeps the codewords that are jointly typical
//! with all earlier words and the searcher's observation; an empty search
//! rejects H0, and several hits are resolved uniformly at random. After the
//! last message A accepts H0 iff all words are jointly typical with `x`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codebook::Codebooks;
use super::{for_each_sequence, guard, Deltas, Hypothesis, Neumaier, ProtocolError};
use crate::exponent::ChannelStack;
use crate::prob::{self, projection_index, JointPmf};
use crate::seed::derive_rng;
use crate::types::counts_typical;

/// `|X|^n |Y|^n` allowed for exact enumeration.
pub const ENUMERATION_CAP: f64 = 16_777_216.0; // 2^24

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub stack: ChannelStack,
    pub deltas: Deltas,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    /// A found no codeword for round `round` (1-based).
    ASearch { round: usize },
    /// B's received words were not typical with `y`.
    BCheck { round: usize },
    BSearch { round: usize },
    /// A's final joint typicality check failed.
    AFinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundIndices {
    pub m_u: Option<usize>,
    pub m_v: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub trial_index: u64,
    pub truth: Hypothesis,
    pub rounds: Vec<RoundIndices>,
    pub rejected_at: Option<Stage>,
    pub decision: Hypothesis,
}

/// H0 marginal over `(messages 0..=j, observation)` used as a typicality
/// reference, with strides to index its cells.
#[derive(Debug, Clone)]
struct Reference {
    weights: Vec<f64>,
    /// Size of each message axis in the tuple; the observation comes last.
    msg_sizes: Vec<usize>,
    obs_size: usize,
}

/// A codebook set bound to its typicality references.
#[derive(Debug, Clone)]
pub struct Protocol {
    cfg: TrialConfig,
    books: Codebooks,
    x_size: usize,
    y_size: usize,
    /// `refs_x[j]`: `(msgs 0..=j, X)`; `refs_y[j]`: `(msgs 0..=j, Y)`.
    refs_x: Vec<Reference>,
    refs_y: Vec<Reference>,
}

impl Protocol {
    pub fn new(p_h0: &JointPmf, cfg: TrialConfig, books: Codebooks) -> Result<Self, ProtocolError> {
        cfg.deltas.validate()?;
        let (x, y) = (cfg.stack.x_size(), cfg.stack.y_size());
        if p_h0.sizes() != [x, y] {
            return Err(ProtocolError::ShapeMismatch(
                "H0 joint does not match the stack's observation alphabets".into(),
            ));
        }
        let xy = JointPmf::from_matrix(
            &p_h0.weights().chunks(y).map(<[f64]>::to_vec).collect::<Vec<_>>(),
            "X",
            "Y",
        )?;
        let joint = cfg.stack.joint(&xy)?;
        let sizes = joint.sizes();
        let nm = sizes.len() - 2;
        if books.alphabets() != &sizes[2..] {
            return Err(ProtocolError::ShapeMismatch("codebooks were built for another stack".into()));
        }
        let reference = |j: usize, obs: usize| {
            let mut keep: Vec<usize> = (2..3 + j).collect();
            keep.push(obs);
            let len: usize = keep.iter().map(|&i| sizes[i]).product();
            let mut w = vec![0.0; len];
            prob::accumulate(joint.weights(), &projection_index(&sizes, &keep), &mut w);
            Reference {
                weights: w,
                msg_sizes: sizes[2..3 + j].to_vec(),
                obs_size: sizes[obs],
            }
        };
        Ok(Self {
            refs_x: (0..nm).map(|j| reference(j, 0)).collect(),
            refs_y: (0..nm).map(|j| reference(j, 1)).collect(),
            cfg,
            books,
            x_size: x,
            y_size: y,
        })
    }

    pub fn config(&self) -> &TrialConfig {
        &self.cfg
    }

    pub fn books(&self) -> &Codebooks {
        &self.books
    }

    pub fn n(&self) -> usize {
        self.books.n()
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    fn messages(&self) -> usize {
        self.books.messages()
    }

    /// Joint typicality of `words` (messages `0..words.len()`) with `obs`.
    fn typical(&self, words: &[&[u8]], obs: &[usize], on_x: bool, delta: f64) -> bool {
        let r = if on_x {
            &self.refs_x[words.len() - 1]
        } else {
            &self.refs_y[words.len() - 1]
        };
        let n = obs.len();
        let mut counts = vec![0u64; r.weights.len()];
        for pos in 0..n {
            let mut c = 0;
            for (w, &s) in words.iter().zip(&r.msg_sizes) {
                c = c * s + w[pos] as usize;
            }
            counts[c * r.obs_size + obs[pos]] += 1;
        }
        counts_typical(&counts, n as u64, &r.weights, delta)
    }

    fn search_delta(&self, j: usize) -> f64 {
        match (j, j % 2) {
            (0, _) => self.cfg.deltas.delta,
            (_, 0) => self.cfg.deltas.delta_final,
            _ => self.cfg.deltas.delta_b,
        }
    }

    fn words<'a>(&'a self, prefix: &[usize]) -> Vec<&'a [u8]> {
        (0..prefix.len())
            .map(|i| self.books.word(i, &prefix[..i], prefix[i]))
            .collect()
    }

    /// B's check before choosing message `j` (odd).
    fn b_check(&self, prefix: &[usize], y: &[usize]) -> bool {
        let w = self.words(prefix);
        self.typical(&w, y, false, self.cfg.deltas.delta_b)
    }

    /// Indices of message `j` jointly typical with the earlier words and the
    /// searcher's observation.
    fn candidates(&self, prefix: &[usize], x: &[usize], y: &[usize]) -> Vec<usize> {
        let j = prefix.len();
        let on_x = j % 2 == 0;
        let obs = if on_x { x } else { y };
        let delta = self.search_delta(j);
        let mut w = self.words(prefix);
        w.push(&[]);
        (0..self.books.sizes()[j])
            .filter(|&m| {
                w[j] = self.books.word(j, prefix, m);
                self.typical(&w, obs, on_x, delta)
            })
            .collect()
    }

    fn final_check(&self, prefix: &[usize], x: &[usize]) -> bool {
        let w = self.words(prefix);
        self.typical(&w, x, true, self.cfg.deltas.delta_final)
    }

    fn check_inputs(&self, x: &[usize], y: &[usize]) -> Result<(), ProtocolError> {
        let n = self.n();
        if x.len() != n || y.len() != n {
            return Err(ProtocolError::ShapeMismatch(format!(
                "sequences must have length {n}, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().any(|&s| s >= self.x_size) || y.iter().any(|&s| s >= self.y_size) {
            return Err(ProtocolError::ShapeMismatch("symbol outside its alphabet".into()));
        }
        Ok(())
    }

    /// One run; ties drawn from the stream `(master, "tie", truth, trial, j)`.
    pub fn run(
        &self,
        trial_index: u64,
        truth: Hypothesis,
        x: &[usize],
        y: &[usize],
    ) -> Result<Transcript, ProtocolError> {
        self.check_inputs(x, y)?;
        Ok(self.run_unchecked(trial_index, truth, x, y))
    }

    pub(crate) fn run_unchecked(&self, trial_index: u64, truth: Hypothesis, x: &[usize], y: &[usize]) -> Transcript {
        let nm = self.messages();
        let mut prefix = Vec::with_capacity(nm);
        let mut rejected_at = None;
        for j in 0..nm {
            let round = j / 2 + 1;
            if j % 2 == 1 && !self.b_check(&prefix, y) {
                rejected_at = Some(Stage::BCheck { round });
                break;
            }
            let c = self.candidates(&prefix, x, y);
            let pick = match c.len() {
                0 => None,
                1 => Some(c[0]),
                k => {
                    let mut rng = derive_rng(
                        self.cfg.master_seed,
                        "tie",
                        &[truth.index(), trial_index, j as u64],
                    );
                    Some(c[rng.gen_range(0..k)])
                }
            };
            match pick {
                Some(m) => prefix.push(m),
                None => {
                    rejected_at = Some(if j % 2 == 0 {
                        Stage::ASearch { round }
                    } else {
                        Stage::BSearch { round }
                    });
                    break;
                }
            }
        }
        if rejected_at.is_none() && !self.final_check(&prefix, x) {
            rejected_at = Some(Stage::AFinal);
        }
        let rounds = (0..nm / 2)
            .map(|k| RoundIndices {
                m_u: prefix.get(2 * k).copied(),
                m_v: prefix.get(2 * k + 1).copied(),
            })
            .collect();
        Transcript {
            trial_index,
            truth,
            rounds,
            decision: if rejected_at.is_none() { Hypothesis::H0 } else { Hypothesis::H1 },
            rejected_at,
        }
    }

    /// Probability of accepting H0 on `(x, y)`, averaging every random tie
    /// resolution uniformly.
    pub(crate) fn accept_probability(&self, x: &[usize], y: &[usize]) -> f64 {
        let mut prefix = Vec::with_capacity(self.messages());
        self.accept_from(&mut prefix, x, y)
    }

    fn accept_from(&self, prefix: &mut Vec<usize>, x: &[usize], y: &[usize]) -> f64 {
        let j = prefix.len();
        if j == self.messages() {
            return if self.final_check(prefix, x) { 1.0 } else { 0.0 };
        }
        if j % 2 == 1 && !self.b_check(prefix, y) {
            return 0.0;
        }
        let c = self.candidates(prefix, x, y);
        if c.is_empty() {
            return 0.0;
        }
        let mut total = Neumaier::default();
        for m in &c {
            prefix.push(*m);
            total.add(self.accept_from(prefix, x, y));
            prefix.pop();
        }
        total.value() / c.len() as f64
    }
}

/// One run of the decision rule.
pub fn run_protocol(
    protocol: &Protocol,
    trial_index: u64,
    truth: Hypothesis,
    x: &[usize],
    y: &[usize],
) -> Result<Transcript, ProtocolError> {
    protocol.run(trial_index, truth, x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactErrors {
    pub alpha: f64,
    pub beta: f64,
}

/// Exact `(alpha, beta)` by enumerating every sequence pair.
pub fn exact_errors(protocol: &Protocol, p_h0: &JointPmf, p_h1: &JointPmf) -> Result<ExactErrors, ProtocolError> {
    let (xs, ys, n) = (protocol.x_size, protocol.y_size, protocol.n());
    for p in [p_h0, p_h1] {
        if p.sizes() != [xs, ys] {
            return Err(ProtocolError::ShapeMismatch("joint does not match the protocol alphabets".into()));
        }
    }
    guard(
        "exact enumeration",
        n as f64 * ((xs * ys) as f64).log2(),
        ENUMERATION_CAP.log2(),
    )?;
    let mut xseqs = Vec::new();
    for_each_sequence(n, xs, |s| xseqs.push(s.to_vec()));
    let (w0, w1) = (p_h0.weights(), p_h1.weights());
    // per x: (sum P0 (1 - acc), sum P1 acc) over all y
    let parts: Vec<(Neumaier, Neumaier)> = xseqs
        .par_iter()
        .map(|x| {
            let mut a = Neumaier::default();
            let mut b = Neumaier::default();
            for_each_sequence(n, ys, |y| {
                let acc = protocol.accept_probability(x, y);
                let (mut p0, mut p1) = (1.0, 1.0);
                for (&xi, &yi) in x.iter().zip(y) {
                    p0 *= w0[xi * ys + yi];
                    p1 *= w1[xi * ys + yi];
                }
                a.add(p0 * (1.0 - acc));
                b.add(p1 * acc);
            });
            (a, b)
        })
        .collect();
    let mut alpha = Neumaier::default();
    let mut beta = Neumaier::default();
    for (a, b) in parts {
        alpha.add(a.value());
        beta.add(b.value());
    }
    Ok(ExactErrors {
        alpha: alpha.value().clamp(0.0, 1.0),
        beta: beta.value().clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::Cardinalities;
    use crate::protocol::build_codebooks_with_rates;

    fn protocol(deltas: Deltas, rates: &[f64]) -> (JointPmf, Protocol) {
        let p = JointPmf::from_matrix(&[vec![0.4, 0.1], vec![0.2, 0.3]], "X", "Y").unwrap();
        let s = ChannelStack::random(2, 2, &Cardinalities::uniform(2, 2, 1), &mut derive_rng(5, "t", &[])).unwrap();
        let books = build_codebooks_with_rates(&p, &s, 4, rates, 3).unwrap();
        let cfg = TrialConfig {
            stack: s,
            deltas,
            master_seed: 11,
        };
        (p.clone(), Protocol::new(&p, cfg, books).unwrap())
    }

    #[test]
    fn vacuous_slack_always_accepts() {
        let (p, pr) = protocol(Deltas::new(1.0, 1.0, 1.0).unwrap(), &[0.5, 0.5]);
        let t = pr.run(0, Hypothesis::H1, &[0, 1, 1, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!(t.decision, Hypothesis::H0);
        assert_eq!(t.rejected_at, None);
        let e = exact_errors(&pr, &p, &p.product_of_marginals()).unwrap();
        assert_eq!((e.alpha, e.beta), (0.0, 1.0));
    }

    #[test]
    fn zero_slack_rejects_at_first_search() {
        // a random stack's (U, X) marginal is not a multiple of 1/4, so no
        // length-4 joint type matches it exactly
        let (_, pr) = protocol(Deltas::new(0.0, 0.0, 0.0).unwrap(), &[0.5, 0.5]);
        let t = pr.run(3, Hypothesis::H0, &[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(t.rejected_at, Some(Stage::ASearch { round: 1 }));
        assert_eq!(t.decision, Hypothesis::H1);
    }

    #[test]
    fn runs_are_reproducible() {
        let (_, pr) = protocol(Deltas::from_base(0.3), &[0.75, 0.75]);
        let a = pr.run(7, Hypothesis::H0, &[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap();
        let b = pr.run(7, Hypothesis::H0, &[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap();
        assert_eq!(a, b);
        assert!(pr.run(7, Hypothesis::H0, &[0, 1], &[0, 1]).is_err());
    }
}
