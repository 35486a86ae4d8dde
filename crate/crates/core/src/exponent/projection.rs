//! I-projection onto families of measures with prescribed marginals, by
//! cyclic iterative proportional fitting.
//!
//! Each step rescales the current iterate so that one constraint marginal is
//! matched exactly. The accumulated log-scalings `phi_k` define the iterate
//! `Q = R exp(sum_k phi_k) / Z`, and
//! `G = sum_k E_target[phi_k] - ln Z` is the dual function of the problem at
//! those scalings. IPF is block coordinate ascent on `G`, so the dual value is
//! nondecreasing and bounds the optimal divergence from below; for any
//! feasible `P`, `D(P || Q_t)` is nonincreasing in `t`.

use serde::{Deserialize, Serialize};

use super::ExponentError;
use crate::prob::{self, kl_slices, projection_index, JointPmf};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_CYCLES: usize = 100_000;

/// `axes` of the reference must carry the marginal `marginal` (whose axes are
/// exactly `axes`, in that order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalConstraint {
    pub marginal: JointPmf,
}

impl MarginalConstraint {
    pub fn new(marginal: JointPmf) -> Self {
        Self { marginal }
    }

    pub fn axis_names(&self) -> Vec<&str> {
        self.marginal.axes().iter().map(|a| a.name.as_str()).collect()
    }
}

/// Natural-log scaling factors per constraint cell; `-inf` marks cells whose
/// target mass is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalings(pub Vec<Vec<f64>>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionProblem {
    pub reference: JointPmf,
    pub constraints: Vec<MarginalConstraint>,
    /// Starting point, given as scalings of the reference (a previous
    /// solution's `scalings`). Any iterate of IPF has this form.
    pub warm_start: Option<Scalings>,
}

impl ProjectionProblem {
    pub fn new(reference: JointPmf, constraints: Vec<MarginalConstraint>) -> Self {
        Self {
            reference,
            constraints,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub minimizer: JointPmf,
    /// `D(minimizer || reference)` in bits.
    pub divergence: f64,
    /// Dual lower bound on the optimal divergence, in bits.
    pub dual_bound: f64,
    /// Largest L1 constraint violation of the returned iterate.
    pub violation: f64,
    pub cycles: usize,
    pub converged: bool,
    pub scalings: Scalings,
}

/// Index maps from reference cells to constraint cells.
#[derive(Debug, Clone)]
pub(crate) struct IpfPlan {
    pub maps: Vec<Vec<usize>>,
    pub lens: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct IpfOutcome {
    pub q: Vec<f64>,
    pub log_scalings: Vec<Vec<f64>>,
    /// Dual value in bits.
    pub dual: f64,
    pub violation: f64,
    pub cycles: usize,
    pub converged: bool,
}

impl IpfPlan {
    pub fn new(maps: Vec<Vec<usize>>, lens: Vec<usize>) -> Self {
        Self { maps, lens }
    }

    fn marginal(&self, k: usize, q: &[f64], out: &mut Vec<f64>) {
        out.resize(self.lens[k], 0.0);
        prob::accumulate(q, &self.maps[k], out);
    }

    /// Fails with the first target cell the reference cannot reach.
    fn check_feasible(&self, reference: &[f64], targets: &[&[f64]]) -> Result<(), ExponentError> {
        let mut m = Vec::new();
        for (k, t) in targets.iter().enumerate() {
            self.marginal(k, reference, &mut m);
            if let Some(cell) = (0..t.len()).find(|&a| t[a] > 0.0 && m[a] <= 0.0) {
                return Err(ExponentError::InfeasibleConstraints {
                    constraint: k,
                    cell,
                });
            }
        }
        Ok(())
    }

    fn start(&self, reference: &[f64], targets: &[&[f64]], warm: Option<&[Vec<f64>]>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let cold = || (reference.to_vec(), self.lens.iter().map(|&l| vec![0.0; l]).collect());
        let Some(w) = warm else { return cold() };
        let usable = w.len() == targets.len()
            && w.iter().zip(targets).all(|(s, t)| {
                s.len() == t.len()
                    && s.iter().zip(t.iter()).all(|(&v, &tv)| if tv > 0.0 { v.is_finite() } else { !v.is_nan() })
            });
        if !usable {
            return cold();
        }
        let mut q = reference.to_vec();
        for (c, v) in q.iter_mut().enumerate() {
            let e: f64 = (0..self.maps.len()).map(|k| w[k][self.maps[k][c]]).sum();
            *v *= e.exp();
        }
        let z: f64 = q.iter().sum();
        if !(z.is_finite() && z > 0.0) {
            return cold();
        }
        // every positive target cell must stay reachable
        let mut m = Vec::new();
        for (k, t) in targets.iter().enumerate() {
            self.marginal(k, &q, &mut m);
            if t.iter().zip(&m).any(|(&tv, &mv)| tv > 0.0 && mv <= 0.0) {
                return cold();
            }
        }
        (q, w.to_vec())
    }

    pub fn solve(
        &self,
        reference: &[f64],
        targets: &[&[f64]],
        warm: Option<&[Vec<f64>]>,
        tol: f64,
        max_cycles: usize,
    ) -> Result<IpfOutcome, ExponentError> {
        self.check_feasible(reference, targets)?;
        let (mut q, mut phi) = self.start(reference, targets, warm);
        let nk = targets.len();
        let mut m = Vec::new();
        let mut cycles = 0;
        let mut converged = false;
        let mut last_updated = None;
        loop {
            // the constraint updated last is matched up to rounding
            let mut violation = 0.0f64;
            for k in 0..nk {
                if Some(k) == last_updated && nk > 1 {
                    continue;
                }
                self.marginal(k, &q, &mut m);
                let v: f64 = m.iter().zip(targets[k]).map(|(a, b)| (a - b).abs()).sum();
                violation = violation.max(v);
            }
            if violation <= tol {
                converged = true;
                break;
            }
            if cycles >= max_cycles {
                break;
            }
            cycles += 1;
            for k in 0..nk {
                self.marginal(k, &q, &mut m);
                let t = targets[k];
                for a in 0..m.len() {
                    let r = if m[a] > 0.0 {
                        t[a] / m[a]
                    } else if t[a] > 0.0 {
                        return Err(ExponentError::InfeasibleConstraints { constraint: k, cell: a });
                    } else {
                        1.0
                    };
                    phi[k][a] += r.ln();
                    m[a] = r;
                }
                for (v, &c) in q.iter_mut().zip(&self.maps[k]) {
                    *v *= m[c];
                }
                last_updated = Some(k);
            }
        }
        let mut violation = 0.0f64;
        {
            for k in 0..nk {
                self.marginal(k, &q, &mut m);
                let v: f64 = m.iter().zip(targets[k]).map(|(a, b)| (a - b).abs()).sum();
                violation = violation.max(v);
            }
        }
        let z: f64 = q.iter().sum();
        let mut dual = -z.ln();
        for (p, t) in phi.iter().zip(targets) {
            for (&l, &tv) in p.iter().zip(t.iter()) {
                if tv > 0.0 {
                    dual += tv * l;
                }
            }
        }
        q.iter_mut().for_each(|v| *v /= z);
        Ok(IpfOutcome {
            q,
            log_scalings: phi,
            dual: dual / std::f64::consts::LN_2,
            violation,
            cycles,
            converged,
        })
    }
}

/// Resolve constraint axes against the reference and check shapes.
pub(crate) fn plan_for(problem: &ProjectionProblem) -> Result<IpfPlan, ExponentError> {
    if problem.constraints.is_empty() {
        return Err(ExponentError::InvalidInput("no constraints given".into()));
    }
    let sizes = problem.reference.sizes();
    let mut maps = Vec::new();
    let mut lens = Vec::new();
    for c in &problem.constraints {
        let names = c.axis_names();
        let pos = problem.reference.positions(&names)?;
        for (p, a) in pos.iter().zip(c.marginal.axes()) {
            if sizes[*p] != a.size {
                return Err(ExponentError::ShapeMismatch(format!(
                    "constraint axis `{}` has size {}, reference has {}",
                    a.name, a.size, sizes[*p]
                )));
            }
        }
        maps.push(projection_index(&sizes, &pos));
        lens.push(c.marginal.weights().len());
    }
    Ok(IpfPlan::new(maps, lens))
}

/// Minimize `D(Q || reference)` over `Q` with the required marginals.
///
/// Returns the last iterate with `converged = false` when `max_cycles` full
/// cycles do not bring every L1 violation below `tol`.
pub fn i_projection(problem: &ProjectionProblem, tol: f64, max_cycles: usize) -> Result<Projection, ExponentError> {
    let plan = plan_for(problem)?;
    let targets: Vec<&[f64]> = problem.constraints.iter().map(|c| c.marginal.weights()).collect();
    let warm = problem.warm_start.as_ref().map(|s| s.0.as_slice());
    let out = plan.solve(problem.reference.weights(), &targets, warm, tol, max_cycles)?;
    let divergence = kl_slices(&out.q, problem.reference.weights());
    Ok(Projection {
        minimizer: JointPmf::from_parts(problem.reference.axes().to_vec(), out.q),
        divergence,
        dual_bound: out.dual,
        violation: out.violation,
        cycles: out.cycles,
        converged: out.converged,
        scalings: Scalings(out.log_scalings),
    })
}
