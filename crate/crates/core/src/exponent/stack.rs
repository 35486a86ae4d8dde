//! K-round stacks of auxiliary message channels.
//!
//! Round `k` has a forward channel `U_k | X, U_1, V_1, .., U_{k-1}, V_{k-1}`
//! chosen by the node observing `X`, and a backward channel
//! `V_k | Y, U_1, V_1, .., V_{k-1}, U_k` chosen by the node observing `Y`.
//! The Markov structure of the messages is enforced by these signatures.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::ExponentError;
use crate::prob::{self, projection_index, Axis, Channel, CmiPlan, JointPmf};

pub const X_AXIS: &str = "X";
pub const Y_AXIS: &str = "Y";

pub fn u_axis(round: usize) -> String {
    format!("U{round}")
}

pub fn v_axis(round: usize) -> String {
    format!("V{round}")
}

/// Message alphabet sizes `(|U_k|, |V_k|)` per round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cardinalities(pub Vec<(usize, usize)>);

impl Cardinalities {
    /// `|U_k| = |X| + 1`, `|V_k| = |Y| + 1` for every round. A heuristic: no
    /// cardinality bound is known for the general problem.
    pub fn default_for(x_size: usize, y_size: usize, rounds: usize) -> Self {
        Self(vec![(x_size + 1, y_size + 1); rounds])
    }

    pub fn uniform(u: usize, v: usize, rounds: usize) -> Self {
        Self(vec![(u, v); rounds])
    }

    pub fn rounds(&self) -> usize {
        self.0.len()
    }

    pub(crate) fn validate(&self) -> Result<(), ExponentError> {
        if self.0.is_empty() {
            return Err(ExponentError::InvalidInput("at least one round is required".into()));
        }
        if self.0.iter().any(|&(u, v)| u == 0 || v == 0) {
            return Err(ExponentError::InvalidInput(
                "message cardinalities must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Message axes in exchange order: `U1, V1, U2, V2, ..`.
fn message_axes(cards: &Cardinalities) -> Vec<Axis> {
    cards
        .0
        .iter()
        .enumerate()
        .flat_map(|(k, &(u, v))| [Axis::new(u_axis(k + 1), u), Axis::new(v_axis(k + 1), v)])
        .collect()
}

/// Input signature of the channel producing message number `m` (0-based in
/// exchange order); even `m` are forward channels.
fn channel_inputs(x_size: usize, y_size: usize, msgs: &[Axis], m: usize) -> Vec<Axis> {
    let own = if m % 2 == 0 {
        Axis::new(X_AXIS, x_size)
    } else {
        Axis::new(Y_AXIS, y_size)
    };
    std::iter::once(own).chain(msgs[..m].iter().cloned()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackRound {
    pub forward: Channel,
    pub backward: Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStack {
    x_size: usize,
    y_size: usize,
    rounds: Vec<StackRound>,
}

impl ChannelStack {
    /// Validates every channel against the required signature.
    pub fn new(x_size: usize, y_size: usize, rounds: Vec<StackRound>) -> Result<Self, ExponentError> {
        let cards = Cardinalities(
            rounds
                .iter()
                .map(|r| (r.forward.output().size, r.backward.output().size))
                .collect(),
        );
        cards.validate()?;
        let msgs = message_axes(&cards);
        for (k, r) in rounds.iter().enumerate() {
            for (m, ch) in [(2 * k, &r.forward), (2 * k + 1, &r.backward)] {
                let want = channel_inputs(x_size, y_size, &msgs, m);
                if ch.inputs() != want.as_slice() || ch.output() != &msgs[m] {
                    return Err(ExponentError::ShapeMismatch(format!(
                        "channel for {} must map {:?} -> {}",
                        msgs[m].name,
                        want.iter().map(|a| &a.name).collect::<Vec<_>>(),
                        msgs[m].name
                    )));
                }
            }
        }
        Ok(Self {
            x_size,
            y_size,
            rounds,
        })
    }

    /// Build every channel from a row generator `(message index, input row) -> pmf`.
    fn build(
        x_size: usize,
        y_size: usize,
        cards: &Cardinalities,
        mut row: impl FnMut(usize, &[usize], usize) -> Vec<f64>,
    ) -> Result<Self, ExponentError> {
        cards.validate()?;
        let msgs = message_axes(cards);
        let mut channels = Vec::with_capacity(msgs.len());
        for m in 0..msgs.len() {
            let inputs = channel_inputs(x_size, y_size, &msgs, m);
            let out = msgs[m].clone();
            let k = out.size;
            channels.push(Channel::from_fn(inputs, out, |idx| row(m, idx, k))?);
        }
        let mut it = channels.into_iter();
        let mut rounds = Vec::new();
        while let (Some(forward), Some(backward)) = (it.next(), it.next()) {
            rounds.push(StackRound { forward, backward });
        }
        Ok(Self {
            x_size,
            y_size,
            rounds,
        })
    }

    /// Rows drawn from the flat Dirichlet distribution.
    pub fn random<R: Rng>(
        x_size: usize,
        y_size: usize,
        cards: &Cardinalities,
        rng: &mut R,
    ) -> Result<Self, ExponentError> {
        Self::build(x_size, y_size, cards, |_, _, k| {
            let g: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let s: f64 = g.iter().sum();
            g.into_iter().map(|v| v / s).collect()
        })
    }

    /// Every message uniform and independent of everything else.
    pub fn uniform(x_size: usize, y_size: usize, cards: &Cardinalities) -> Result<Self, ExponentError> {
        Self::build(x_size, y_size, cards, |_, _, k| vec![1.0 / k as f64; k])
    }

    /// Single-letter messages in every round.
    pub fn trivial(x_size: usize, y_size: usize, rounds: usize) -> Self {
        Self::uniform(x_size, y_size, &Cardinalities::uniform(1, 1, rounds))
            .expect("rounds >= 1")
    }

    /// First-round messages copy the observations (`U1 = X`, and `V1 = Y` when
    /// `copy_y`), every other message uniform. `None` when the message
    /// alphabets are too small to copy.
    pub fn copying(
        x_size: usize,
        y_size: usize,
        cards: &Cardinalities,
        copy_y: bool,
    ) -> Option<Self> {
        let (cu, cv) = *cards.0.first()?;
        if cu < x_size || (copy_y && cv < y_size) {
            return None;
        }
        Self::build(x_size, y_size, cards, |m, idx, k| {
            let mut r = vec![0.0; k];
            match m {
                0 => r[idx[0]] = 1.0,
                1 if copy_y => r[idx[0]] = 1.0,
                _ => r.iter_mut().for_each(|v| *v = 1.0 / k as f64),
            }
            r
        })
        .ok()
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn rounds(&self) -> &[StackRound] {
        &self.rounds
    }

    pub fn k(&self) -> usize {
        self.rounds.len()
    }

    pub fn cardinalities(&self) -> Cardinalities {
        Cardinalities(
            self.rounds
                .iter()
                .map(|r| (r.forward.output().size, r.backward.output().size))
                .collect(),
        )
    }

    /// Channels in exchange order.
    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.rounds.iter().flat_map(|r| [&r.forward, &r.backward])
    }

    pub(crate) fn channels_mut(&mut self) -> impl Iterator<Item = &mut Channel> {
        self.rounds
            .iter_mut()
            .flat_map(|r| [&mut r.forward, &mut r.backward])
    }

    /// Names of the message axes in exchange order.
    pub fn message_names(&self) -> Vec<String> {
        message_axes(&self.cardinalities())
            .into_iter()
            .map(|a| a.name)
            .collect()
    }

    pub(crate) fn check_xy(&self, p: &JointPmf) -> Result<(), ExponentError> {
        let want = [Axis::new(X_AXIS, self.x_size), Axis::new(Y_AXIS, self.y_size)];
        if p.axes() != want {
            return Err(ExponentError::ShapeMismatch(format!(
                "expected a joint over (X[{}], Y[{}])",
                self.x_size, self.y_size
            )));
        }
        Ok(())
    }

    /// The joint `P_{X Y U1 V1 .. UK VK}` induced by the stack on `p_xy`.
    pub fn joint(&self, p_xy: &JointPmf) -> Result<JointPmf, ExponentError> {
        self.check_xy(p_xy)?;
        let mut j = p_xy.clone();
        for ch in self.channels() {
            j = prob::chain(&j, ch)?;
        }
        Ok(j)
    }

    /// Replace every row by `(1 - t) row + t uniform`.
    pub(crate) fn mix_uniform(&self, t: f64) -> Self {
        let mut s = self.clone();
        for ch in s.channels_mut() {
            let k = ch.output().size as f64;
            for w in ch.flat_rows_mut() {
                *w = (1.0 - t) * *w + t / k;
            }
        }
        s
    }
}

/// Precomputed index plans for evaluating many stacks of one shape on fixed
/// `(p_h0, p_h1)`: the joint, the rate, the two-sided independence objective
/// and the marginal constraints of the inner projection.
#[derive(Debug, Clone)]
pub(crate) struct StackLayout {
    /// `(x, y)` flat index of every joint cell.
    xy: Vec<usize>,
    /// Per channel, the flat row-entry index used by every joint cell.
    entries: Vec<Vec<usize>>,
    /// Marginal maps for `(messages, X)` and `(messages, Y)`.
    pub constraint_maps: [Vec<usize>; 2],
    pub constraint_len: [usize; 2],
    rate_terms: Vec<CmiPlan>,
    gain_terms: Vec<CmiPlan>,
}

impl StackLayout {
    pub fn new(x_size: usize, y_size: usize, cards: &Cardinalities) -> Self {
        let msgs = message_axes(cards);
        let mut sizes = vec![x_size, y_size];
        sizes.extend(msgs.iter().map(|a| a.size));
        let nm = msgs.len();
        let xy = projection_index(&sizes, &[0, 1]);
        let mut entries = Vec::with_capacity(nm);
        for m in 0..nm {
            // inputs: own observation then earlier messages, then the output
            let own = if m % 2 == 0 { 0 } else { 1 };
            let mut axes = vec![own];
            axes.extend((0..m).map(|j| 2 + j));
            axes.push(2 + m);
            entries.push(projection_index(&sizes, &axes));
        }
        let msg_pos: Vec<usize> = (2..2 + nm).collect();
        let with = |obs: usize| {
            let mut v = msg_pos.clone();
            v.push(obs);
            v
        };
        let cx = with(0);
        let cy = with(1);
        let len = |axes: &[usize]| axes.iter().map(|&i| sizes[i]).product::<usize>();
        let mut rate_terms = Vec::with_capacity(nm);
        let mut gain_terms = Vec::with_capacity(nm);
        for m in 0..nm {
            let past: Vec<usize> = (2..2 + m).collect();
            let (own, other) = if m % 2 == 0 { (0, 1) } else { (1, 0) };
            rate_terms.push(CmiPlan::new(&sizes, &[own], &[2 + m], &past));
            gain_terms.push(CmiPlan::new(&sizes, &[other], &[2 + m], &past));
        }
        Self {
            constraint_len: [len(&cx), len(&cy)],
            constraint_maps: [
                projection_index(&sizes, &cx),
                projection_index(&sizes, &cy),
            ],
            xy,
            entries,
            rate_terms,
            gain_terms,
        }
    }

    pub fn cells(&self) -> usize {
        self.xy.len()
    }

    /// Joint weights of `stack` on `p_xy` (flat `x * |Y| + y`) into `out`.
    pub fn joint_into(&self, p_xy: &[f64], stack: &ChannelStack, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = p_xy[self.xy[c]];
        }
        for (ch, ent) in stack.channels().zip(&self.entries) {
            let rows = ch.flat_rows();
            for (o, &e) in out.iter_mut().zip(ent) {
                *o *= rows[e];
            }
        }
    }

    /// Total exchanged rate on an H0 joint.
    pub fn rate(&self, joint: &[f64]) -> f64 {
        self.rate_terms.iter().map(|t| t.eval(joint)).sum()
    }

    /// `sum_k I(U_k; Y | past) + I(V_k; X | past)` on an H0 joint.
    pub fn gain(&self, joint: &[f64]) -> f64 {
        self.gain_terms.iter().map(|t| t.eval(joint)).sum()
    }

    pub fn marginal(&self, which: usize, joint: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.constraint_len[which]];
        prob::accumulate(joint, &self.constraint_maps[which], &mut out);
        out
    }
}
