//! Multistart projected coordinate ascent over channel stacks.
//!
//! Each restart sweeps over every channel row, estimates the gradient of the
//! penalized objective `J = f - rho * max(0, rate - R)^2` with respect to the
//! row by forward differences, and takes a projected step on the simplex with
//! a per-row adaptive step size. `rho` doubles every sweep up to a cap. The
//! best rate-feasible stack ever visited is kept, and the final iterate is
//! repaired towards feasibility by mixing rows with the uniform distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::projection::IpfPlan;
use super::stack::{Cardinalities, ChannelStack, StackLayout};
use super::ExponentError;
use crate::seed::SeedPath;

/// A restart has converged once a sweep at full penalty gains less than
/// this many bits.
const STALL_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    /// L1 constraint tolerance of the inner projection during the search.
    pub inner_tol: f64,
    pub inner_max_cycles: usize,
    /// A stack is rate-feasible when `rate <= R + rate_tol`.
    pub rate_tol: f64,
    pub fd_step: f64,
    pub initial_step: f64,
    pub penalty_cap: f64,
    /// Objective evaluations allowed per restart; `None` means unlimited.
    pub max_evaluations: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            seed: 0,
            max_sweeps: 200,
            inner_tol: 1e-11,
            inner_max_cycles: 100_000,
            rate_tol: 1e-9,
            fd_step: 1e-6,
            initial_step: 0.1,
            penalty_cap: 1e8,
            max_evaluations: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), ExponentError> {
        let bad = |m: &str| Err(ExponentError::InvalidInput(m.into()));
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if !(self.inner_tol > 0.0 && self.fd_step > 0.0 && self.initial_step > 0.0) {
            return bad("tolerances and step sizes must be positive");
        }
        if !(self.rate_tol >= 0.0) || !(self.penalty_cap >= 1.0) {
            return bad("rate_tol must be >= 0 and penalty_cap >= 1");
        }
        Ok(())
    }
}

pub(crate) enum Objective<'a> {
    /// Inner divergence minimum against this H1 joint (flat `x * |Y| + y`).
    Inner(&'a [f64]),
    /// Sum of the cross information terms.
    Independence,
}

pub(crate) struct Evaluator<'a> {
    pub layout: StackLayout,
    pub p0: &'a [f64],
    pub objective: Objective<'a>,
    ipf: IpfPlan,
    tol: f64,
    max_cycles: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Eval {
    pub value: f64,
    pub rate: f64,
    pub scalings: Option<Vec<Vec<f64>>>,
}

#[derive(Default)]
pub(crate) struct Buffers {
    w0: Vec<f64>,
    w1: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        x: usize,
        y: usize,
        cards: &Cardinalities,
        p0: &'a [f64],
        objective: Objective<'a>,
        tol: f64,
        max_cycles: usize,
    ) -> Self {
        let layout = StackLayout::new(x, y, cards);
        let ipf = IpfPlan::new(layout.constraint_maps.to_vec(), layout.constraint_len.to_vec());
        Self {
            layout,
            p0,
            objective,
            ipf,
            tol,
            max_cycles,
        }
    }

    pub fn eval(
        &self,
        stack: &ChannelStack,
        warm: Option<&[Vec<f64>]>,
        buf: &mut Buffers,
    ) -> Result<Eval, ExponentError> {
        let n = self.layout.cells();
        buf.w0.resize(n, 0.0);
        self.layout.joint_into(self.p0, stack, &mut buf.w0);
        let rate = self.layout.rate(&buf.w0);
        match self.objective {
            Objective::Independence => Ok(Eval {
                value: self.layout.gain(&buf.w0),
                rate,
                scalings: None,
            }),
            Objective::Inner(p1) => {
                buf.w1.resize(n, 0.0);
                self.layout.joint_into(p1, stack, &mut buf.w1);
                let tx = self.layout.marginal(0, &buf.w0);
                let ty = self.layout.marginal(1, &buf.w0);
                let out = self.ipf.solve(&buf.w1, &[&tx, &ty], warm, self.tol, self.max_cycles)?;
                Ok(Eval {
                    // the dual value is a smooth function of the stack
                    value: out.dual.max(0.0),
                    rate,
                    scalings: Some(out.log_scalings),
                })
            }
        }
    }
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub value: f64,
    pub rate: f64,
    pub stack: ChannelStack,
}

#[derive(Debug, Clone)]
pub(crate) struct RestartOutcome {
    pub best: Option<Candidate>,
    pub sweeps: usize,
    pub evaluations: usize,
    pub budget_hit: bool,
    pub converged: bool,
}

struct Walker<'e, 'a> {
    ev: &'e Evaluator<'a>,
    cfg: &'e SearchConfig,
    limit: f64,
    buf: Buffers,
    evaluations: usize,
    best: Option<Candidate>,
}

impl Walker<'_, '_> {
    fn eval(&mut self, s: &ChannelStack, warm: Option<&[Vec<f64>]>) -> Option<Eval> {
        self.evaluations += 1;
        // candidates the reference cannot reach are simply rejected
        let e = self.ev.eval(s, warm, &mut self.buf).ok()?;
        if e.rate <= self.limit + self.cfg.rate_tol
            && self.best.as_ref().map_or(true, |b| e.value > b.value)
        {
            self.best = Some(Candidate {
                value: e.value,
                rate: e.rate,
                stack: s.clone(),
            });
        }
        Some(e)
    }

    fn out_of_budget(&self) -> bool {
        self.cfg.max_evaluations.is_some_and(|m| self.evaluations >= m)
    }

    fn penalized(&self, e: &Eval, rho: f64) -> f64 {
        let v = (e.rate - self.limit).max(0.0);
        e.value - rho * v * v
    }

    /// Smallest uniform mixing weight that makes the stack rate-feasible.
    fn repair(&mut self, s: &ChannelStack) {
        let feasible = |w: &mut Self, t: f64| {
            let m = s.mix_uniform(t);
            w.eval(&m, None).is_some_and(|e| e.rate <= w.limit + w.cfg.rate_tol)
        };
        if feasible(self, 0.0) || !feasible(self, 1.0) {
            return;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if feasible(self, mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    fn run(mut self, start: ChannelStack) -> RestartOutcome {
        let mut cur = start;
        let Some(mut cur_eval) = self.eval(&cur, None) else {
            return RestartOutcome {
                best: None,
                sweeps: 0,
                evaluations: self.evaluations,
                budget_hit: false,
                converged: false,
            };
        };
        let shapes: Vec<(usize, usize)> = cur
            .channels()
            .map(|c| (c.row_count(), c.output().size))
            .collect();
        let mut steps: Vec<Vec<f64>> = shapes
            .iter()
            .map(|&(r, _)| vec![self.cfg.initial_step; r])
            .collect();
        let h = self.cfg.fd_step;
        let mut sweeps = 0;
        let mut converged = false;
        let mut budget_hit = false;
        'outer: while sweeps < self.cfg.max_sweeps {
            let rho = 2f64.powi(sweeps.min(1000) as i32).min(self.cfg.penalty_cap);
            sweeps += 1;
            let sweep_start = self.penalized(&cur_eval, rho);
            for (c, &(rows, k)) in shapes.iter().enumerate() {
                if k < 2 {
                    continue;
                }
                for r in 0..rows {
                    if self.out_of_budget() {
                        budget_hit = true;
                        break 'outer;
                    }
                    let base = self.penalized(&cur_eval, rho);
                    let warm = cur_eval.scalings.clone();
                    let mut d = vec![0.0; k];
                    for j in 0..k {
                        let mut trial = cur.clone();
                        {
                            let w = row_mut(&mut trial, c, r, k);
                            for (i, v) in w.iter_mut().enumerate() {
                                *v = (*v + if i == j { h } else { 0.0 }) / (1.0 + h);
                            }
                        }
                        d[j] = match self.eval(&trial, warm.as_deref()) {
                            Some(e) => (self.penalized(&e, rho) - base) * (1.0 + h) / h,
                            None => 0.0,
                        };
                    }
                    let mean = d.iter().sum::<f64>() / k as f64;
                    d.iter_mut().for_each(|v| *v -= mean);
                    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if !(norm > 1e-12) {
                        continue;
                    }
                    for _ in 0..4 {
                        let s = steps[c][r];
                        let mut trial = cur.clone();
                        {
                            let w = row_mut(&mut trial, c, r, k);
                            for (v, g) in w.iter_mut().zip(&d) {
                                *v += s * g / norm;
                            }
                            project_simplex(w);
                        }
                        match self.eval(&trial, warm.as_deref()) {
                            Some(e) if self.penalized(&e, rho) > base => {
                                cur = trial;
                                cur_eval = e;
                                steps[c][r] = (s * 1.5).min(1.0);
                                break;
                            }
                            _ => steps[c][r] = (s * 0.5).max(1e-12),
                        }
                    }
                }
            }
            let gained = self.penalized(&cur_eval, rho) - sweep_start;
            if rho >= self.cfg.penalty_cap && gained < STALL_GAIN {
                converged = true;
                break;
            }
        }
        self.repair(&cur);
        RestartOutcome {
            best: self.best,
            sweeps,
            evaluations: self.evaluations,
            budget_hit,
            converged,
        }
    }
}

fn row_mut(s: &mut ChannelStack, c: usize, r: usize, k: usize) -> &mut [f64] {
    let ch = s.channels_mut().nth(c).unwrap();
    &mut ch.flat_rows_mut()[r * k..(r + 1) * k]
}

/// Structured starts first, then Dirichlet-random stacks up to `cfg.restarts`.
pub(crate) fn starting_points(
    x: usize,
    y: usize,
    cards: &Cardinalities,
    cfg: &SearchConfig,
    extra: &[ChannelStack],
) -> Result<Vec<ChannelStack>, ExponentError> {
    let mut starts: Vec<ChannelStack> = extra.to_vec();
    starts.push(ChannelStack::uniform(x, y, cards)?);
    starts.extend(ChannelStack::copying(x, y, cards, false));
    starts.extend(ChannelStack::copying(x, y, cards, true));
    starts.truncate(cfg.restarts.max(extra.len()));
    let path = SeedPath::new(cfg.seed, "restart");
    let mut i = 0u64;
    while starts.len() < cfg.restarts.max(extra.len()) {
        starts.push(ChannelStack::random(x, y, cards, &mut path.child(i).rng())?);
        i += 1;
    }
    Ok(starts)
}

pub(crate) struct SearchResult {
    pub best: Option<Candidate>,
    pub best_restart: Option<usize>,
    pub per_restart: Vec<Option<f64>>,
    pub sweeps: usize,
    pub evaluations: usize,
    pub budget_hit: bool,
    pub converged: bool,
}

pub(crate) fn search(
    ev: &Evaluator<'_>,
    limit: f64,
    cfg: &SearchConfig,
    starts: Vec<ChannelStack>,
) -> SearchResult {
    let outcomes: Vec<RestartOutcome> = starts
        .into_par_iter()
        .map(|s| {
            Walker {
                ev,
                cfg,
                limit,
                buf: Buffers::default(),
                evaluations: 0,
                best: None,
            }
            .run(s)
        })
        .collect();
    let mut best: Option<Candidate> = None;
    let mut best_restart = None;
    for (i, o) in outcomes.iter().enumerate() {
        if let Some(c) = &o.best {
            if best.as_ref().map_or(true, |b| c.value > b.value) {
                best = Some(c.clone());
                best_restart = Some(i);
            }
        }
    }
    SearchResult {
        best,
        best_restart,
        per_restart: outcomes.iter().map(|o| o.best.as_ref().map(|c| c.value)).collect(),
        sweeps: outcomes.iter().map(|o| o.sweeps).sum(),
        evaluations: outcomes.iter().map(|o| o.evaluations).sum(),
        budget_hit: outcomes.iter().any(|o| o.budget_hit),
        converged: outcomes.iter().all(|o| o.converged),
    }
}
