//! Independent solver for the marginal-constrained I-projection, used to
//! cross-check the IPF results.
//!
//! The primal iterate is the reference reweighted multiplicatively,
//! `Q(c) = R(c) exp(sum_k lambda_k[a_k(c)]) / Z`, and all multipliers are
//! updated jointly by damped Newton steps on the concave dual
//! `G(lambda) = sum_k <t_k, lambda_k> - ln Z(lambda)`. Cells whose target
//! marginal is zero are pruned up front instead of driving multipliers to
//! `-inf`.

use nalgebra::{DMatrix, DVector};

use super::projection::{plan_for, Projection, ProjectionProblem, Scalings};
use super::ExponentError;
use crate::prob::{kl_slices, JointPmf};

struct Dual {
    /// Per active cell: `ln R(c)` and its variable indices (one per constraint).
    log_ref: Vec<f64>,
    vars: Vec<Vec<usize>>,
    target: DVector<f64>,
}

impl Dual {
    fn log_weights(&self, lambda: &DVector<f64>) -> Vec<f64> {
        self.log_ref
            .iter()
            .zip(&self.vars)
            .map(|(l, vs)| l + vs.iter().map(|&v| lambda[v]).sum::<f64>())
            .collect()
    }

    /// `(G, Q over active cells)`.
    fn eval(&self, lambda: &DVector<f64>) -> (f64, Vec<f64>) {
        let s = self.log_weights(lambda);
        let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut q: Vec<f64> = s.iter().map(|v| (v - mx).exp()).collect();
        let z: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= z);
        let lnz = mx + z.ln();
        (self.target.dot(lambda) - lnz, q)
    }

    fn moments(&self, q: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let nv = self.target.len();
        let mut mean = DVector::zeros(nv);
        let mut second = DMatrix::zeros(nv, nv);
        for (w, vs) in q.iter().zip(&self.vars) {
            for &u in vs {
                mean[u] += w;
                for &v in vs {
                    second[(u, v)] += w;
                }
            }
        }
        let cov = second - &mean * mean.transpose();
        (mean, cov)
    }
}

/// Solve the problem of `problem` to gradient L1 norm `tol`.
pub fn lagrangian_projection(
    problem: &ProjectionProblem,
    tol: f64,
    max_iter: usize,
) -> Result<Projection, ExponentError> {
    let plan = plan_for(problem)?;
    let reference = problem.reference.weights();
    let targets: Vec<&[f64]> = problem.constraints.iter().map(|c| c.marginal.weights()).collect();

    // variables: positive-target cells of every constraint
    let mut var_of: Vec<Vec<Option<usize>>> = Vec::new();
    let mut target = Vec::new();
    let mut origin = Vec::new();
    for (k, t) in targets.iter().enumerate() {
        var_of.push(
            t.iter()
                .enumerate()
                .map(|(cell, &v)| {
                    (v > 0.0).then(|| {
                        target.push(v);
                        origin.push((k, cell));
                        target.len() - 1
                    })
                })
                .collect(),
        );
    }
    let mut active = Vec::new();
    let mut log_ref = Vec::new();
    let mut vars = Vec::new();
    let mut covered = vec![false; target.len()];
    for (c, &r) in reference.iter().enumerate() {
        if r <= 0.0 {
            continue;
        }
        let vs: Option<Vec<usize>> = plan.maps.iter().zip(&var_of).map(|(m, vo)| vo[m[c]]).collect();
        if let Some(vs) = vs {
            vs.iter().for_each(|&v| covered[v] = true);
            active.push(c);
            log_ref.push(r.ln());
            vars.push(vs);
        }
    }
    if let Some(v) = covered.iter().position(|&c| !c) {
        let (constraint, cell) = origin[v];
        return Err(ExponentError::InfeasibleConstraints { constraint, cell });
    }

    let dual = Dual {
        log_ref,
        vars,
        target: DVector::from_vec(target),
    };
    let nv = dual.target.len();
    let mut lambda = DVector::zeros(nv);
    let (mut g, mut q) = dual.eval(&lambda);
    let mut iters = 0;
    let mut converged = false;
    let mut mu = 1e-8;
    while iters < max_iter {
        let (mean, cov) = dual.moments(&q);
        let grad = &dual.target - mean;
        if grad.lp_norm(1) <= tol {
            converged = true;
            break;
        }
        iters += 1;
        // Levenberg-Marquardt damped Newton direction; the dual has a gauge
        // freedom per constraint, so the Hessian is singular without damping.
        let step = loop {
            let mut h = cov.clone();
            for i in 0..nv {
                h[(i, i)] += mu;
            }
            if let Some(ch) = h.cholesky() {
                break ch.solve(&grad);
            }
            mu *= 10.0;
        };
        let slope = grad.dot(&step);
        let mut s = 1.0;
        let mut accepted = false;
        while s > 1e-12 {
            let cand = &lambda + &step * s;
            let (gc, qc) = dual.eval(&cand);
            if gc.is_finite() && gc >= g + 1e-4 * s * slope {
                lambda = cand;
                g = gc;
                q = qc;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if accepted {
            mu = (mu * 0.3).max(1e-14);
        } else {
            mu *= 100.0;
            if mu > 1e12 {
                break;
            }
        }
    }

    let mut full = vec![0.0; reference.len()];
    for (&c, &w) in active.iter().zip(&q) {
        full[c] = w;
    }
    let violation = {
        let mut worst = 0.0f64;
        for (k, t) in targets.iter().enumerate() {
            let mut m = vec![0.0; t.len()];
            crate::prob::accumulate(&full, &plan.maps[k], &mut m);
            worst = worst.max(m.iter().zip(t.iter()).map(|(a, b)| (a - b).abs()).sum());
        }
        worst
    };
    let scalings = Scalings(
        var_of
            .iter()
            .map(|vo| vo.iter().map(|v| v.map_or(f64::NEG_INFINITY, |i| lambda[i])).collect())
            .collect(),
    );
    Ok(Projection {
        divergence: kl_slices(&full, reference),
        minimizer: JointPmf::from_parts(problem.reference.axes().to_vec(), full),
        dual_bound: g / std::f64::consts::LN_2,
        violation,
        cycles: iters,
        converged,
        scalings,
    })
}
