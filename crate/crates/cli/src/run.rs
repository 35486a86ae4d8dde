//! Executes a validated [`ExperimentConfig`].
//!
//! Every random draw comes from a stream derived from the master seed, and
//! each row records the derivation path of its stream in `seed_path`:
//! `<master>/<label>[/<index>...]`. Deterministic rows carry
//! `deterministic`.

use std::time::Instant;

use colht::exponent::{
    feasible_exponent, feasible_exponent_sweep, independence_exponent_sweep, unidirectional_exponent_sweep,
    zero_rate_exponent, Cardinalities, ChannelStack, ExponentError, ExponentReport, SearchConfig,
};
use colht::protocol::{
    build_codebooks, converse_bound_check, csiszar_identity_check, exact_errors, monte_carlo_errors, zero_rate_one_bit,
    Codebooks, ErrorEstimate, InteractiveCode, Protocol, ProtocolError, Slope, TrialConfig, ENUMERATION_CAP,
};
use colht::seed::derive_rng;
use colht::{Axis, JointPmf};
use rand::Rng;

use crate::config::{ConfigError, ExperimentConfig, Mode, StackSource};
use crate::report::{Detail, Failure, FailureKind, Report, ReportBody, Row, SimulationDetail, TaskResult, TaskTiming, Versions};

const DETERMINISTIC: &str = "deterministic";
const AUDIT_CONFIGS: usize = 100;
const AUDIT_CODES: usize = 200;
const AUDIT_JOINTS: usize = 100;
/// Agreement required between a Monte Carlo estimate and the exact value,
/// in binomial standard deviations.
const AUDIT_SIGMAS: f64 = 3.0;
/// Largest telescoping-identity deviation that passes.
const IDENTITY_TOL: f64 = 1e-9;

fn path(seed: u64, label: &str, idx: &[u64]) -> String {
    let mut s = format!("{seed}/{label}");
    for i in idx {
        s.push_str(&format!("/{i}"));
    }
    s
}

fn fail(task: &mut TaskResult, kind: FailureKind, message: impl Into<String>) {
    task.failure = Some(Failure {
        kind,
        message: message.into(),
    });
}

fn protocol_failure(e: &ProtocolError) -> FailureKind {
    match e {
        ProtocolError::SizeGuard { .. } => FailureKind::SizeGuard,
        _ => FailureKind::InvalidInput,
    }
}

fn config_failure(task: &mut TaskResult, e: ConfigError) {
    fail(task, FailureKind::InvalidInput, e.to_string());
}

/// Search settings with the master seed.
fn search_config(cfg: &ExperimentConfig) -> SearchConfig {
    SearchConfig {
        seed: cfg.seed,
        ..cfg.search.clone()
    }
}

/// Run every task of `cfg`. Failures are recorded in the tasks rather than
/// returned, so partial output survives.
pub fn run_experiment(cfg: &ExperimentConfig) -> Report {
    let mut tasks = Vec::new();
    let mut timings = Vec::new();
    let mut timed = |name: String, f: &mut dyn FnMut(&mut TaskResult)| {
        let start = Instant::now();
        let mut task = TaskResult::new(name.clone());
        f(&mut task);
        timings.push(TaskTiming {
            task: name,
            seconds: start.elapsed().as_secs_f64(),
        });
        tasks.push(task);
    };
    let mode = cfg.mode();
    match mode {
        Mode::Exponent | Mode::Independence | Mode::Unidirectional => {
            timed(mode.name().into(), &mut |t| exponent_task(cfg, t))
        }
        Mode::ZeroRate => {
            timed("zero-rate".into(), &mut |t| zero_rate_task(cfg, t));
            for &n in &cfg.n {
                timed(format!("one-bit n={n}"), &mut |t| one_bit_task(cfg, n, t));
            }
        }
        Mode::Simulate => match simulation_stack(cfg) {
            Ok((stack, label)) => {
                for &n in &cfg.n {
                    timed(format!("simulate n={n}"), &mut |t| simulate_task(cfg, &stack, &label, n, t));
                }
            }
            Err((kind, msg)) => timed("simulate".into(), &mut |t| fail(t, kind, msg.clone())),
        },
        Mode::OracleAudit => {
            for &n in &cfg.n {
                timed(format!("oracle-audit n={n}"), &mut |t| oracle_audit_task(cfg, n, t));
            }
        }
        Mode::ConverseAudit => timed("converse-audit".into(), &mut |t| converse_audit_task(cfg, t)),
        Mode::IdentityAudit => timed("identity-audit".into(), &mut |t| identity_audit_task(cfg, t)),
    }
    Report {
        body: ReportBody {
            config: cfg.clone(),
            versions: Versions::default(),
            tasks,
        },
        timings,
    }
}

fn exponent_rows(mode: &str, seed: u64, reps: &[ExponentReport], task: &mut TaskResult) {
    let mut unconverged = Vec::new();
    for rep in reps {
        let mut row = Row::new(mode, path(seed, "restart", &[]));
        row.rate = Some(rep.rate_limit);
        row.k = Some(rep.cardinalities.rounds());
        row.value = Some(rep.value);
        task.rows.push(row);
        if !rep.converged || rep.budget_exceeded {
            unconverged.push(rep.rate_limit);
        }
        if rep.heuristic_cardinalities {
            let msg = "message cardinalities defaulted to |X|+1, |Y|+1".to_string();
            if !task.warnings.contains(&msg) {
                task.warnings.push(msg);
            }
        }
    }
    if !unconverged.is_empty() {
        let rates: Vec<String> = unconverged.iter().map(|r| r.to_string()).collect();
        fail(
            task,
            FailureKind::NotConverged,
            format!("search did not converge at R = {}; values are partial", rates.join(", ")),
        );
    }
}

fn exponent_task(cfg: &ExperimentConfig, task: &mut TaskResult) {
    let mode = cfg.mode();
    let search = search_config(cfg);
    let rates = cfg.rate_grid();
    let cards = cfg.cards();
    let result = (|| -> Result<Vec<ExponentReport>, String> {
        let h0 = cfg.h0_joint().map_err(|e| e.to_string())?;
        let out = match mode {
            Mode::Exponent => {
                let h1 = cfg.h1_joint().map_err(|e| e.to_string())?;
                feasible_exponent_sweep(&h0, &h1, &rates, cfg.rounds, cards.as_ref(), &search)
            }
            Mode::Independence => independence_exponent_sweep(&h0, &rates, cfg.rounds, cards.as_ref(), &search),
            _ => {
                let card_u = cfg.cardinalities.as_ref().map(|c| c[0].0);
                unidirectional_exponent_sweep(&h0, &rates, card_u, &search)
            }
        };
        out.map_err(|e| e.to_string())
    })();
    match result {
        Ok(reps) => {
            exponent_rows(mode.name(), cfg.seed, &reps, task);
            if let [rep] = &reps[..] {
                task.detail = Some(Detail::Exponent(Box::new(rep.clone())));
            }
        }
        Err(e) => fail(task, FailureKind::InvalidInput, e),
    }
}

fn zero_rate_task(cfg: &ExperimentConfig, task: &mut TaskResult) {
    let rep = (|| -> Result<ExponentReport, String> {
        let h0 = cfg.h0_joint().map_err(|e| e.to_string())?;
        let h1 = cfg.h1_joint().map_err(|e| e.to_string())?;
        zero_rate_exponent(&h0, &h1).map_err(|e| e.to_string())
    })();
    match rep {
        Ok(rep) => {
            let mut row = Row::new("zero-rate", DETERMINISTIC.into());
            row.rate = Some(0.0);
            row.k = Some(1);
            row.value = Some(rep.value);
            task.rows.push(row);
            task.detail = Some(Detail::Exponent(Box::new(rep)));
        }
        Err(e) => fail(task, FailureKind::InvalidInput, e),
    }
}

fn one_bit_task(cfg: &ExperimentConfig, n: usize, task: &mut TaskResult) {
    let delta = cfg.deltas.delta.unwrap_or_else(|| (n as f64).powf(-1.0 / 3.0));
    let res = (|| {
        let h0 = cfg.h0_joint().map_err(|e| (FailureKind::InvalidInput, e.to_string()))?;
        let h1 = cfg.h1_joint().map_err(|e| (FailureKind::InvalidInput, e.to_string()))?;
        zero_rate_one_bit(&h0, &h1, n, delta).map_err(|e| (protocol_failure(&e), e.to_string()))
    })();
    match res {
        Ok(r) => {
            let mut row = Row::new("one-bit", DETERMINISTIC.into());
            row.n = Some(n);
            row.rate = Some(0.0);
            row.k = Some(1);
            row.alpha = Some(r.alpha);
            row.beta = Some(r.beta);
            row.slope = r.slope.is_finite().then_some(r.slope);
            task.rows.push(row);
            task.detail = Some(Detail::OneBit {
                n,
                delta,
                log2_beta: r.log2_beta.is_finite().then_some(r.log2_beta),
                joint_types: r.joint_types,
            });
        }
        Err((kind, msg)) => fail(task, kind, msg),
    }
}

/// The stack to simulate and the seed path it came from.
fn simulation_stack(cfg: &ExperimentConfig) -> Result<(ChannelStack, String), (FailureKind, String)> {
    let bad = |e: String| (FailureKind::InvalidInput, e);
    let h0 = cfg.h0_joint().map_err(|e| bad(e.to_string()))?;
    let [xs, ys] = h0.sizes()[..] else {
        return Err(bad("h0 must be a matrix".into()));
    };
    match cfg.stack {
        StackSource::Random => {
            let cards = cfg.cards().unwrap_or_else(|| Cardinalities::default_for(xs, ys, cfg.rounds));
            let stack = ChannelStack::random(xs, ys, &cards, &mut derive_rng(cfg.seed, "stack", &[]))
                .map_err(|e| bad(e.to_string()))?;
            Ok((stack, path(cfg.seed, "stack", &[])))
        }
        StackSource::Optimized => {
            let h1 = cfg.h1_joint().map_err(|e| bad(e.to_string()))?;
            let r = cfg.rate_grid()[0];
            let rep = feasible_exponent(&h0, &h1, r, cfg.rounds, cfg.cards().as_ref(), &search_config(cfg))
                .map_err(|e: ExponentError| bad(e.to_string()))?;
            Ok((rep.best_stack, path(cfg.seed, "restart", &[])))
        }
    }
}

fn simulate_task(cfg: &ExperimentConfig, stack: &ChannelStack, stack_path: &str, n: usize, task: &mut TaskResult) {
    let res = (|| -> Result<(), ProtocolError> {
        let h0 = cfg.h0_joint().map_err(|e| ProtocolError::InvalidInput(e.to_string()))?;
        let h1 = cfg.h1_joint().map_err(|e| ProtocolError::InvalidInput(e.to_string()))?;
        let deltas = cfg.deltas.resolve(n).map_err(|e| ProtocolError::InvalidInput(e.to_string()))?;
        let books = build_codebooks(&h0, stack, n, &deltas, cfg.seed)?;
        let detail_books = (books.sizes().to_vec(), books.rates().to_vec());
        let exchanged = books.exchanged_rate();
        let protocol = Protocol::new(
            &h0,
            TrialConfig {
                stack: stack.clone(),
                deltas,
                master_seed: cfg.seed,
            },
            books,
        )?;
        let trials = cfg.trials.unwrap_or(0);
        let estimate = if trials == 0 {
            task.warnings.push("trials = 0: no Monte Carlo estimate".into());
            None
        } else {
            Some(monte_carlo_errors(&protocol, &h0, &h1, trials)?)
        };
        let seed_path = format!("{}+{stack_path}", path(cfg.seed, "protocol", &[]));
        let mut row = Row::new("simulate", seed_path);
        row.n = Some(n);
        row.rate = Some(exchanged);
        row.k = Some(stack.k());
        if let Some(est) = &estimate {
            fill_estimate(&mut row, est);
            if matches!(est.slope, Slope::Censored(_)) {
                task.warnings.push(format!(
                    "n={n}: no H1 trial accepted; slope is the censored bound log2(T)/n"
                ));
            }
        }
        task.rows.push(row);
        let enumerable = n as f64 * ((h0.sizes()[0] * h0.sizes()[1]) as f64).log2() <= ENUMERATION_CAP.log2();
        let exact = if enumerable {
            let ex = exact_errors(&protocol, &h0, &h1)?;
            let mut row = Row::new("simulate-exact", DETERMINISTIC.into());
            row.n = Some(n);
            row.rate = Some(exchanged);
            row.k = Some(stack.k());
            row.alpha = Some(ex.alpha);
            row.beta = Some(ex.beta);
            row.slope = (ex.beta > 0.0).then(|| -ex.beta.log2() / n as f64);
            task.rows.push(row);
            Some(ex)
        } else {
            None
        };
        task.detail = Some(Detail::Simulation(Box::new(SimulationDetail {
            n,
            book_sizes: detail_books.0,
            message_rates: detail_books.1,
            deltas,
            estimate,
            exact,
        })));
        Ok(())
    })();
    if let Err(e) = res {
        fail(task, protocol_failure(&e), e.to_string());
    }
}

fn fill_estimate(row: &mut Row, est: &ErrorEstimate) {
    row.alpha = Some(est.alpha_hat);
    row.beta = Some(est.beta_hat);
    row.slope = Some(est.slope.value());
    row.ci_lo = Some(est.beta_ci.0);
    row.ci_hi = Some(est.beta_ci.1);
}

/// Whether `hat` from `trials` draws is within [`AUDIT_SIGMAS`] binomial
/// standard deviations of the exact probability `p`.
pub fn within_sigmas(hat: f64, p: f64, trials: u64) -> bool {
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    (hat - p).abs() <= AUDIT_SIGMAS * sd + 1e-12
}

/// One oracle-audit case: random stack and codebooks, Monte Carlo against
/// exact enumeration.
fn audit_case(
    h0: &JointPmf,
    h1: &JointPmf,
    cfg: &ExperimentConfig,
    n: usize,
    i: usize,
) -> Result<(ErrorEstimate, colht::protocol::ExactErrors, Codebooks), ProtocolError> {
    let [xs, ys] = h0.sizes()[..] else {
        return Err(ProtocolError::ShapeMismatch("h0 must be a matrix".into()));
    };
    let cards = cfg.cards().unwrap_or_else(|| Cardinalities::uniform(2, 2, cfg.rounds));
    let idx = [n as u64, i as u64];
    let stack = ChannelStack::random(xs, ys, &cards, &mut derive_rng(cfg.seed, "audit-stack", &idx))?;
    let seed: u64 = derive_rng(cfg.seed, "audit-seed", &idx).gen();
    let deltas = cfg.deltas.resolve(n).map_err(|e| ProtocolError::InvalidInput(e.to_string()))?;
    let books = build_codebooks(h0, &stack, n, &deltas, seed)?;
    let protocol = Protocol::new(
        h0,
        TrialConfig {
            stack,
            deltas,
            master_seed: seed,
        },
        books.clone(),
    )?;
    let exact = exact_errors(&protocol, h0, h1)?;
    let est = monte_carlo_errors(&protocol, h0, h1, cfg.trials.unwrap_or(0))?;
    Ok((est, exact, books))
}

fn oracle_audit_task(cfg: &ExperimentConfig, n: usize, task: &mut TaskResult) {
    let (h0, h1) = match (cfg.h0_joint(), cfg.h1_joint()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return config_failure(task, e),
    };
    if cfg.trials == Some(0) {
        task.warnings.push("trials = 0: nothing to audit".into());
        return;
    }
    let cases = cfg.audits.unwrap_or(AUDIT_CONFIGS);
    let (mut passed, mut worst) = (0, 0.0f64);
    for i in 0..cases {
        match audit_case(&h0, &h1, cfg, n, i) {
            Ok((est, exact, books)) => {
                let ok = within_sigmas(est.alpha_hat, exact.alpha, est.trials)
                    && within_sigmas(est.beta_hat, exact.beta, est.trials);
                passed += usize::from(ok);
                worst = worst.max((est.alpha_hat - exact.alpha).abs()).max((est.beta_hat - exact.beta).abs());
                let mut row = Row::new("oracle-audit", path(cfg.seed, "audit", &[n as u64, i as u64]));
                row.n = Some(n);
                row.rate = Some(books.exchanged_rate());
                row.k = Some(cfg.rounds);
                row.value = Some(f64::from(u8::from(ok)));
                fill_estimate(&mut row, &est);
                task.rows.push(row);
            }
            Err(e) => return fail(task, protocol_failure(&e), format!("case {i}: {e}")),
        }
    }
    task.detail = Some(Detail::Audit {
        cases,
        passed,
        skipped: 0,
        worst: Some(worst),
    });
    // three-sigma bands miss about 0.3% of honest cases
    let allowed = cases / 100;
    if cases - passed > allowed {
        fail(
            task,
            FailureKind::InvalidInput,
            format!("{} of {cases} cases outside {AUDIT_SIGMAS} sigma", cases - passed),
        );
    }
}

fn converse_audit_task(cfg: &ExperimentConfig, task: &mut TaskResult) {
    let h0 = match cfg.h0_joint() {
        Ok(h) => h,
        Err(e) => return config_failure(task, e),
    };
    let [xs, ys] = h0.sizes()[..] else {
        return fail(task, FailureKind::InvalidInput, "h0 must be a matrix");
    };
    let max_n = cfg.n.iter().copied().max().unwrap_or(4);
    let cases = cfg.codes.unwrap_or(AUDIT_CODES);
    let (mut passed, mut skipped, mut worst) = (0, 0, f64::INFINITY);
    for i in 0..cases {
        let mut rng = derive_rng(cfg.seed, "converse", &[i as u64]);
        let n = rng.gen_range(1..=max_n);
        let f = rng.gen_range(1..=4);
        let g = rng.gen_range(1..=4);
        let code = InteractiveCode::random(n, xs, ys, f, g, &mut rng);
        match converse_bound_check(&code, &h0) {
            Ok(r) => {
                let ok = r.slack >= -1e-9;
                passed += usize::from(ok);
                worst = worst.min(r.slack);
                let mut row = Row::new("converse-audit", path(cfg.seed, "converse", &[i as u64]));
                row.n = Some(n);
                row.value = Some(r.slack);
                row.alpha = Some(r.alpha);
                row.beta = Some(r.beta);
                task.rows.push(row);
            }
            Err(ProtocolError::DegenerateCode) => skipped += 1,
            Err(e) => return fail(task, protocol_failure(&e), format!("code {i}: {e}")),
        }
    }
    task.detail = Some(Detail::Audit {
        cases,
        passed,
        skipped,
        worst: worst.is_finite().then_some(worst),
    });
    if skipped > 0 {
        task.warnings.push(format!("{skipped} degenerate codes (beta = 0) skipped"));
    }
    if passed + skipped < cases {
        fail(
            task,
            FailureKind::InvalidInput,
            format!("{} codes violate the converse bound", cases - passed - skipped),
        );
    }
}

/// Random joint over `A_1..A_n, B_1..B_n` and possibly a binary `C`, from a
/// flat Dirichlet.
pub fn random_identity_joint<R: Rng>(rng: &mut R) -> (JointPmf, usize, bool) {
    let n = rng.gen_range(1..=3);
    let a = rng.gen_range(2..=3);
    let b = rng.gen_range(2..=3);
    let with_c = rng.gen_bool(0.5);
    let mut axes: Vec<Axis> = (1..=n).map(|i| Axis::new(format!("A{i}"), a)).collect();
    axes.extend((1..=n).map(|i| Axis::new(format!("B{i}"), b)));
    if with_c {
        axes.push(Axis::new("C", 2));
    }
    let cells: usize = axes.iter().map(|ax| ax.size).product();
    let w: Vec<f64> = (0..cells).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    let joint = JointPmf::new(axes, w.into_iter().map(|v| v / s).collect()).expect("valid random joint");
    (joint, n, with_c)
}

fn identity_audit_task(cfg: &ExperimentConfig, task: &mut TaskResult) {
    let cases = cfg.joints.unwrap_or(AUDIT_JOINTS);
    let (mut passed, mut worst) = (0, 0.0f64);
    for i in 0..cases {
        let (joint, n, with_c) = random_identity_joint(&mut derive_rng(cfg.seed, "identity", &[i as u64]));
        let a: Vec<String> = (1..=n).map(|k| format!("A{k}")).collect();
        let b: Vec<String> = (1..=n).map(|k| format!("B{k}")).collect();
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        let b: Vec<&str> = b.iter().map(String::as_str).collect();
        let c: &[&str] = if with_c { &["C"] } else { &[] };
        match csiszar_identity_check(&joint, &a, &b, c) {
            Ok(r) => {
                passed += usize::from(r.deviation <= IDENTITY_TOL);
                worst = worst.max(r.deviation);
                let mut row = Row::new("identity-audit", path(cfg.seed, "identity", &[i as u64]));
                row.n = Some(n);
                row.value = Some(r.deviation);
                task.rows.push(row);
            }
            Err(e) => return fail(task, protocol_failure(&e), format!("joint {i}: {e}")),
        }
    }
    task.detail = Some(Detail::Audit {
        cases,
        passed,
        skipped: 0,
        worst: Some(worst),
    });
    if passed < cases {
        fail(
            task,
            FailureKind::InvalidInput,
            format!("{} joints deviate by more than {IDENTITY_TOL}", cases - passed),
        );
    }
}
