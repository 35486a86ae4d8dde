//! Type-II error exponents of the interactive two-node test.
//!
//! The exponent attained by a fixed stack of message channels is the
//! divergence from the H1-induced joint of the closest measure that matches
//! the H0-induced `(messages, X)` and `(messages, Y)` marginals. Maximizing
//! that over stacks whose total information rate fits the budget `R` gives a
//! feasible exponent; the search is local, so reported values are the best
//! lower bound found rather than certified maxima.

mod lagrangian;
mod projection;
mod search;
mod stack;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::{kl_slices, Axis, JointPmf, ProbError};

pub use lagrangian::lagrangian_projection;
pub use projection::{
    i_projection, MarginalConstraint, Projection, ProjectionProblem, Scalings, DEFAULT_MAX_CYCLES,
    DEFAULT_TOL,
};
pub use search::SearchConfig;
pub use stack::{u_axis, v_axis, Cardinalities, ChannelStack, StackRound, X_AXIS, Y_AXIS};

use search::{search, starting_points, Evaluator, Objective};
use stack::StackLayout;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid rate {0}: must be finite and nonnegative")]
    InvalidRate(f64),
    #[error("constraint {constraint} requires mass on cell {cell}, which the reference cannot reach")]
    InfeasibleConstraints { constraint: usize, cell: usize },
    #[error("H1 joint has zero mass at (x={x}, y={y}); full support is required")]
    SupportViolation { x: usize, y: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartStats {
    pub restarts: usize,
    /// Restarts that visited at least one rate-feasible stack.
    pub feasible: usize,
    pub best_restart: Option<usize>,
    /// Best rate-feasible search value per restart.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    /// Exponent in bits per sample; a lower bound found by search.
    pub value: f64,
    pub best_stack: ChannelStack,
    /// Minimizer of the inner projection at `best_stack`; absent for the
    /// closed-form independence objectives.
    pub inner_minimizer: Option<JointPmf>,
    pub rate_limit: f64,
    pub rate_used: f64,
    pub cardinalities: Cardinalities,
    /// Set when the message cardinalities were defaulted rather than chosen.
    pub heuristic_cardinalities: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub budget_exceeded: bool,
    pub restarts: RestartStats,
}

/// Sizes and flat weights of a two-axis joint, read as `(X, Y)`.
fn xy_parts(p: &JointPmf) -> Result<(usize, usize), ExponentError> {
    match p.axes() {
        [a, b] => Ok((a.size, b.size)),
        _ => Err(ExponentError::ShapeMismatch(
            "expected a joint over exactly two axes (X, Y)".into(),
        )),
    }
}

/// The joint relabelled to the canonical `(X, Y)` axis names.
fn canonical(p: &JointPmf) -> Result<JointPmf, ExponentError> {
    let (x, y) = xy_parts(p)?;
    Ok(JointPmf::new(
        vec![Axis::new(X_AXIS, x), Axis::new(Y_AXIS, y)],
        p.weights().to_vec(),
    )?)
}

fn same_shape(p0: &JointPmf, p1: &JointPmf) -> Result<(usize, usize), ExponentError> {
    let a = xy_parts(p0)?;
    if a != xy_parts(p1)? {
        return Err(ExponentError::ShapeMismatch(
            "H0 and H1 joints differ in alphabet sizes".into(),
        ));
    }
    Ok(a)
}

fn check_rate(r: f64) -> Result<(), ExponentError> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(ExponentError::InvalidRate(r))
    }
}

/// Centralized exponent `D(p0 || p1)`; infinite on a support violation.
pub fn stein_exponent(p0: &JointPmf, p1: &JointPmf) -> Result<f64, ExponentError> {
    same_shape(p0, p1)?;
    Ok(kl_slices(p0.weights(), p1.weights()))
}

/// Total information rate exchanged by `stack` under `p_h0`.
pub fn rate_of(stack: &ChannelStack, p_h0: &JointPmf) -> Result<f64, ExponentError> {
    let p = canonical(p_h0)?;
    stack.check_xy(&p)?;
    let lay = StackLayout::new(stack.x_size(), stack.y_size(), &stack.cardinalities());
    let mut w = vec![0.0; lay.cells()];
    lay.joint_into(p.weights(), stack, &mut w);
    Ok(lay.rate(&w))
}

/// `sum_k I(U_k; Y | past) + I(V_k; X | past)` under `p_xy`: the exponent a
/// stack attains when H1 is the product of the marginals.
pub fn independence_objective(stack: &ChannelStack, p_xy: &JointPmf) -> Result<f64, ExponentError> {
    let p = canonical(p_xy)?;
    stack.check_xy(&p)?;
    let lay = StackLayout::new(stack.x_size(), stack.y_size(), &stack.cardinalities());
    let mut w = vec![0.0; lay.cells()];
    lay.joint_into(p.weights(), stack, &mut w);
    Ok(lay.gain(&w))
}

/// The inner projection problem of a fixed stack: reference `stack(p_h1)`,
/// constraints the `(messages, X)` and `(messages, Y)` marginals of
/// `stack(p_h0)`.
pub fn inner_problem(
    stack: &ChannelStack,
    p_h0: &JointPmf,
    p_h1: &JointPmf,
) -> Result<ProjectionProblem, ExponentError> {
    same_shape(p_h0, p_h1)?;
    let j0 = stack.joint(&canonical(p_h0)?)?;
    let j1 = stack.joint(&canonical(p_h1)?)?;
    let msgs = stack.message_names();
    let mut constraints = Vec::with_capacity(2);
    for obs in [X_AXIS, Y_AXIS] {
        let mut keep: Vec<&str> = msgs.iter().map(String::as_str).collect();
        keep.push(obs);
        constraints.push(MarginalConstraint::new(j0.marginalize(&keep)?));
    }
    Ok(ProjectionProblem::new(j1, constraints))
}

pub fn inner_projection(
    stack: &ChannelStack,
    p_h0: &JointPmf,
    p_h1: &JointPmf,
    tol: f64,
    max_cycles: usize,
) -> Result<Projection, ExponentError> {
    i_projection(&inner_problem(stack, p_h0, p_h1)?, tol, max_cycles)
}

/// Exponent attained by a fixed stack.
pub fn inner_exponent(stack: &ChannelStack, p_h0: &JointPmf, p_h1: &JointPmf) -> Result<f64, ExponentError> {
    Ok(inner_projection(stack, p_h0, p_h1, DEFAULT_TOL, DEFAULT_MAX_CYCLES)?.divergence)
}

fn require_full_support(p1: &JointPmf) -> Result<(), ExponentError> {
    let (_, y) = xy_parts(p1)?;
    match p1.weights().iter().position(|&w| w <= 0.0) {
        Some(i) => Err(ExponentError::SupportViolation { x: i / y, y: i % y }),
        None => Ok(()),
    }
}

fn trivial_report(
    stack: ChannelStack,
    value: f64,
    minimizer: Option<JointPmf>,
    rate_limit: f64,
    converged: bool,
    heuristic: bool,
) -> ExponentReport {
    ExponentReport {
        value,
        cardinalities: stack.cardinalities(),
        best_stack: stack,
        inner_minimizer: minimizer,
        rate_limit,
        rate_used: 0.0,
        heuristic_cardinalities: heuristic,
        iterations: 0,
        evaluations: 1,
        converged,
        budget_exceeded: false,
        restarts: RestartStats {
            restarts: 0,
            feasible: 1,
            best_restart: None,
            values: Vec::new(),
        },
    }
}

/// Zero-rate exponent: divergence from `p_h1` of the closest joint with the
/// `X` and `Y` marginals of `p_h0`.
pub fn zero_rate_exponent(p_h0: &JointPmf, p_h1: &JointPmf) -> Result<ExponentReport, ExponentError> {
    let (x, y) = same_shape(p_h0, p_h1)?;
    require_full_support(p_h1)?;
    let stack = ChannelStack::trivial(x, y, 1);
    let pr = inner_projection(&stack, p_h0, p_h1, DEFAULT_TOL, DEFAULT_MAX_CYCLES)?;
    Ok(trivial_report(stack, pr.divergence, Some(pr.minimizer), 0.0, pr.converged, false))
}

fn resolve_cards(
    x: usize,
    y: usize,
    k: usize,
    cards: Option<&Cardinalities>,
) -> Result<(Cardinalities, bool), ExponentError> {
    if k == 0 {
        return Err(ExponentError::InvalidInput("K must be at least 1".into()));
    }
    match cards {
        None => Ok((Cardinalities::default_for(x, y, k), true)),
        Some(c) if c.rounds() != k => Err(ExponentError::InvalidInput(format!(
            "{} cardinality pairs given for K = {k}",
            c.rounds()
        ))),
        Some(c) => {
            c.validate()?;
            Ok((c.clone(), false))
        }
    }
}

/// `p1 = None` selects the closed-form independence objective.
struct Setup {
    p0: JointPmf,
    p1: Option<JointPmf>,
    x: usize,
    y: usize,
    cards: Cardinalities,
    heuristic: bool,
}

impl Setup {
    /// Only observation-independent messages have zero rate, and those reduce
    /// to the single-letter stack.
    fn zero_rate(&self) -> Result<ExponentReport, ExponentError> {
        let stack = ChannelStack::trivial(self.x, self.y, self.cards.rounds());
        Ok(match &self.p1 {
            Some(p1) => {
                let pr = inner_projection(&stack, &self.p0, p1, DEFAULT_TOL, DEFAULT_MAX_CYCLES)?;
                trivial_report(stack, pr.divergence, Some(pr.minimizer), 0.0, pr.converged, self.heuristic)
            }
            None => {
                let v = independence_objective(&stack, &self.p0)?;
                trivial_report(stack, v, None, 0.0, true, self.heuristic)
            }
        })
    }

    fn run(&self, r: f64, cfg: &SearchConfig, extra: &[ChannelStack]) -> Result<ExponentReport, ExponentError> {
        check_rate(r)?;
        cfg.validate()?;
        if r == 0.0 {
            return self.zero_rate();
        }
        let objective = match &self.p1 {
            Some(p1) => Objective::Inner(p1.weights()),
            None => Objective::Independence,
        };
        let ev = Evaluator::new(
            self.x,
            self.y,
            &self.cards,
            self.p0.weights(),
            objective,
            cfg.inner_tol,
            cfg.inner_max_cycles,
        );
        let starts = starting_points(self.x, self.y, &self.cards, cfg, extra)?;
        let res = search(&ev, r, cfg, starts);
        let Some(best) = res.best else {
            // the uniform start has zero rate, so only an evaluation failure
            // gets here; surface it
            let stack = ChannelStack::uniform(self.x, self.y, &self.cards)?;
            if let Some(p1) = &self.p1 {
                inner_projection(&stack, &self.p0, p1, DEFAULT_TOL, DEFAULT_MAX_CYCLES)?;
            }
            return Err(ExponentError::InvalidInput("no rate-feasible stack found".into()));
        };
        let (value, minimizer, converged) = match &self.p1 {
            Some(p1) => {
                let pr = inner_projection(&best.stack, &self.p0, p1, DEFAULT_TOL, DEFAULT_MAX_CYCLES)?;
                (pr.divergence, Some(pr.minimizer), pr.converged && res.converged)
            }
            None => (independence_objective(&best.stack, &self.p0)?, None, res.converged),
        };
        Ok(ExponentReport {
            value,
            rate_used: best.rate,
            cardinalities: self.cards.clone(),
            best_stack: best.stack,
            inner_minimizer: minimizer,
            rate_limit: r,
            heuristic_cardinalities: self.heuristic,
            iterations: res.sweeps,
            evaluations: res.evaluations,
            converged,
            budget_exceeded: res.budget_hit,
            restarts: RestartStats {
                restarts: res.per_restart.len(),
                feasible: res.per_restart.iter().filter(|v| v.is_some()).count(),
                best_restart: res.best_restart,
                values: res.per_restart,
            },
        })
    }

    /// Ascending rates, each search seeded with the previous best stack, so
    /// the values are nondecreasing by construction.
    fn sweep(&self, rates: &[f64], cfg: &SearchConfig) -> Result<Vec<ExponentReport>, ExponentError> {
        let mut order: Vec<usize> = (0..rates.len()).collect();
        for &r in rates {
            check_rate(r)?;
        }
        order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
        let mut out: Vec<Option<ExponentReport>> = vec![None; rates.len()];
        let mut prev: Option<ChannelStack> = None;
        for i in order {
            let extra: Vec<ChannelStack> = prev.iter().cloned().collect();
            let rep = self.run(rates[i], cfg, &extra)?;
            // the zero-rate stack has singleton messages; only carry full-size stacks
            if rep.best_stack.cardinalities() == self.cards {
                prev = Some(rep.best_stack.clone());
            }
            out[i] = Some(rep);
        }
        Ok(out.into_iter().map(|r| r.expect("every rate visited")).collect())
    }
}

fn feasible_setup(
    p_h0: &JointPmf,
    p_h1: &JointPmf,
    k: usize,
    cards: Option<&Cardinalities>,
) -> Result<Setup, ExponentError> {
    let (x, y) = same_shape(p_h0, p_h1)?;
    let (cards, heuristic) = resolve_cards(x, y, k, cards)?;
    Ok(Setup {
        p0: canonical(p_h0)?,
        p1: Some(canonical(p_h1)?),
        x,
        y,
        cards,
        heuristic,
    })
}

fn independence_setup(
    p_xy: &JointPmf,
    k: usize,
    cards: Option<&Cardinalities>,
) -> Result<Setup, ExponentError> {
    let (x, y) = xy_parts(p_xy)?;
    let (cards, heuristic) = resolve_cards(x, y, k, cards)?;
    Ok(Setup {
        p0: canonical(p_xy)?,
        p1: None,
        x,
        y,
        cards,
        heuristic,
    })
}

/// Best exponent found over `K`-round stacks with total rate at most `r`.
/// `cards = None` uses `|U_k| = |X| + 1`, `|V_k| = |Y| + 1`.
pub fn feasible_exponent(
    p_h0: &JointPmf,
    p_h1: &JointPmf,
    r: f64,
    k: usize,
    cards: Option<&Cardinalities>,
    cfg: &SearchConfig,
) -> Result<ExponentReport, ExponentError> {
    feasible_setup(p_h0, p_h1, k, cards)?.run(r, cfg, &[])
}

pub fn feasible_exponent_sweep(
    p_h0: &JointPmf,
    p_h1: &JointPmf,
    rates: &[f64],
    k: usize,
    cards: Option<&Cardinalities>,
    cfg: &SearchConfig,
) -> Result<Vec<ExponentReport>, ExponentError> {
    feasible_setup(p_h0, p_h1, k, cards)?.sweep(rates, cfg)
}

/// Testing against independence: maximizes the cross information terms over
/// rate-feasible stacks.
pub fn independence_exponent(
    p_xy: &JointPmf,
    r: f64,
    k: usize,
    cards: Option<&Cardinalities>,
    cfg: &SearchConfig,
) -> Result<ExponentReport, ExponentError> {
    independence_setup(p_xy, k, cards)?.run(r, cfg, &[])
}

pub fn independence_exponent_sweep(
    p_xy: &JointPmf,
    rates: &[f64],
    k: usize,
    cards: Option<&Cardinalities>,
    cfg: &SearchConfig,
) -> Result<Vec<ExponentReport>, ExponentError> {
    independence_setup(p_xy, k, cards)?.sweep(rates, cfg)
}

/// One-way communication from the `X` node: `max I(U; Y)` subject to
/// `I(U; X) <= r`. Runs the two-sided search with a single-letter reply.
pub fn unidirectional_exponent(
    p_xy: &JointPmf,
    r: f64,
    card_u: Option<usize>,
    cfg: &SearchConfig,
) -> Result<ExponentReport, ExponentError> {
    let mut reps = unidirectional_exponent_sweep(p_xy, &[r], card_u, cfg)?;
    Ok(reps.remove(0))
}

pub fn unidirectional_exponent_sweep(
    p_xy: &JointPmf,
    rates: &[f64],
    card_u: Option<usize>,
    cfg: &SearchConfig,
) -> Result<Vec<ExponentReport>, ExponentError> {
    let (x, _) = xy_parts(p_xy)?;
    let heuristic = card_u.is_none();
    let cards = Cardinalities(vec![(card_u.unwrap_or(x + 1), 1)]);
    let mut reps = independence_setup(p_xy, 1, Some(&cards))?.sweep(rates, cfg)?;
    for rep in &mut reps {
        rep.heuristic_cardinalities = heuristic;
    }
    Ok(reps)
}
