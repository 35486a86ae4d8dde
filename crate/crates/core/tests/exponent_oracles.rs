use colht::exponent::*;
use colht::prob::{conditional_mutual_information, mutual_information, Axis, Channel};
use colht::seed::derive_rng;
use colht::JointPmf;
use proptest::prelude::*;
use rand::Rng;

fn matrix(w: &[f64]) -> JointPmf {
    JointPmf::from_matrix(&[w[..2].to_vec(), w[2..].to_vec()], "X", "Y").unwrap()
}

fn random_joint(rng: &mut impl Rng, floor: f64) -> JointPmf {
    let w: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() + floor).collect();
    let s: f64 = w.iter().sum();
    matrix(&w.iter().map(|v| v / s).collect::<Vec<_>>())
}

fn kl4(q: [f64; 4], r: &[f64]) -> f64 {
    q.iter()
        .zip(r)
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, r)| q * (q / r).log2())
        .sum()
}

/// Brute-force minimum of `D(Q || r)` over 2x2 couplings `Q` with row sum
/// `a` in the first row and column sum `b` in the first column, stepping
/// the free cell by 1e-6.
fn coupling_grid_min(a: f64, b: f64, r: &[f64]) -> f64 {
    let lo = (a + b - 1.0).max(0.0);
    let hi = a.min(b);
    let steps = ((hi - lo) / 1e-6).ceil() as usize;
    (0..=steps)
        .map(|i| {
            let t = (lo + i as f64 * 1e-6).min(hi);
            kl4([t, a - t, b - t, (1.0 - a - b + t).max(0.0)], r)
        })
        .fold(f64::INFINITY, f64::min)
}

fn quick() -> SearchConfig {
    SearchConfig {
        restarts: 8,
        ..Default::default()
    }
}

#[test]
fn zero_rate_matches_grid() {
    let mut rng = derive_rng(11, "zero-rate", &[]);
    for _ in 0..10 {
        let p0 = random_joint(&mut rng, 0.0);
        let p1 = random_joint(&mut rng, 0.02);
        let w = p0.weights();
        let oracle = coupling_grid_min(w[0] + w[1], w[0] + w[2], p1.weights());
        let v = zero_rate_exponent(&p0, &p1).unwrap().value;
        assert!((v - oracle).abs() <= 1e-5, "{v} vs {oracle}");
    }
}

#[test]
fn zero_rate_trivial_cases() {
    let p0 = matrix(&[0.4, 0.1, 0.15, 0.35]);
    assert!(zero_rate_exponent(&p0, &p0.product_of_marginals()).unwrap().value.abs() < 1e-9);
    assert!(zero_rate_exponent(&p0, &p0).unwrap().value.abs() < 1e-9);
    let p1 = matrix(&[0.5, 0.0, 0.25, 0.25]);
    assert_eq!(
        zero_rate_exponent(&p0, &p1).unwrap_err(),
        ExponentError::SupportViolation { x: 0, y: 1 }
    );
}

#[test]
fn projection_onto_random_marginals_matches_grid() {
    let mut rng = derive_rng(12, "marginals", &[]);
    for _ in 0..10 {
        let reference = random_joint(&mut rng, 0.02);
        let (a, b) = (rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
        let problem = ProjectionProblem::new(
            reference.clone(),
            vec![
                MarginalConstraint::new(JointPmf::new(vec![Axis::new("X", 2)], vec![a, 1.0 - a]).unwrap()),
                MarginalConstraint::new(JointPmf::new(vec![Axis::new("Y", 2)], vec![b, 1.0 - b]).unwrap()),
            ],
        );
        let p = i_projection(&problem, DEFAULT_TOL, DEFAULT_MAX_CYCLES).unwrap();
        assert!(p.converged && p.violation <= DEFAULT_TOL);
        let oracle = coupling_grid_min(a, b, reference.weights());
        assert!((p.divergence - oracle).abs() <= 1e-5, "{} vs {oracle}", p.divergence);
        assert!(p.dual_bound <= oracle + 1e-12);
    }
}

#[test]
fn dual_value_never_decreases() {
    let mut rng = derive_rng(13, "monotone", &[]);
    let cards = Cardinalities::uniform(2, 2, 1);
    let stack = ChannelStack::random(2, 2, &cards, &mut rng).unwrap();
    let problem = inner_problem(&stack, &random_joint(&mut rng, 0.0), &random_joint(&mut rng, 0.05)).unwrap();
    let mut last = f64::NEG_INFINITY;
    for cycles in 1..40 {
        let p = i_projection(&problem, 1e-14, cycles).unwrap();
        assert!(p.dual_bound >= last - 1e-12, "cycle {cycles}: {} < {last}", p.dual_bound);
        last = p.dual_bound;
    }
    let p = i_projection(&problem, DEFAULT_TOL, DEFAULT_MAX_CYCLES).unwrap();
    assert!(p.violation <= DEFAULT_TOL);
}

#[test]
fn independent_solvers_agree() {
    let mut rng = derive_rng(14, "solvers", &[]);
    let cards = Cardinalities::uniform(2, 2, 1);
    for _ in 0..15 {
        let stack = ChannelStack::random(2, 2, &cards, &mut rng).unwrap();
        let problem = inner_problem(&stack, &random_joint(&mut rng, 0.0), &random_joint(&mut rng, 0.02)).unwrap();
        let a = i_projection(&problem, DEFAULT_TOL, DEFAULT_MAX_CYCLES).unwrap();
        let b = lagrangian_projection(&problem, 1e-10, 500).unwrap();
        assert!((a.divergence - b.divergence).abs() <= 1e-4, "{} vs {}", a.divergence, b.divergence);
    }
}

#[test]
fn rate_is_sum_of_message_terms() {
    let mut rng = derive_rng(15, "rate", &[]);
    let p = random_joint(&mut rng, 0.0);
    let stack = ChannelStack::random(2, 2, &Cardinalities::uniform(2, 2, 2), &mut rng).unwrap();
    let j = stack.joint(&p).unwrap();
    let names = stack.message_names();
    let mut oracle = 0.0;
    for (m, name) in names.iter().enumerate() {
        let past: Vec<&str> = names[..m].iter().map(String::as_str).collect();
        let own = if m % 2 == 0 { "X" } else { "Y" };
        oracle += conditional_mutual_information(&j, &[name.as_str()], &[own], &past).unwrap();
    }
    assert!((rate_of(&stack, &p).unwrap() - oracle).abs() < 1e-12);
    assert_eq!(rate_of(&ChannelStack::trivial(2, 2, 2), &p).unwrap(), 0.0);
    let copy = ChannelStack::copying(2, 2, &Cardinalities(vec![(2, 1)]), false).unwrap();
    let hx = p.entropy_of(&["X"]).unwrap();
    assert!((rate_of(&copy, &p).unwrap() - hx).abs() < 1e-12);
}

#[test]
fn singleton_messages_reduce_to_zero_rate() {
    let mut rng = derive_rng(16, "singleton", &[]);
    for k in 1..=2 {
        let p0 = random_joint(&mut rng, 0.0);
        let p1 = random_joint(&mut rng, 0.02);
        let inner = inner_exponent(&ChannelStack::trivial(2, 2, k), &p0, &p1).unwrap();
        let zero = zero_rate_exponent(&p0, &p1).unwrap().value;
        assert!((inner - zero).abs() <= 1e-9);
    }
}

#[test]
fn full_rate_reaches_stein() {
    let p0 = matrix(&[0.4, 0.1, 0.15, 0.35]);
    let p1 = matrix(&[0.1, 0.2, 0.2, 0.5]);
    let stein = stein_exponent(&p0, &p1).unwrap();
    let r = p0.entropy();
    let rep = feasible_exponent(&p0, &p1, r, 1, None, &quick()).unwrap();
    assert!(rep.value >= stein - 1e-3, "{} vs {stein}", rep.value);
    assert!(rep.value <= stein + 1e-6);
    assert!(rep.rate_used <= r + 1e-9);
}

#[test]
fn independence_cases() {
    let p = matrix(&[0.45, 0.05, 0.05, 0.45]);
    let i = mutual_information(&p, &["X"], &["Y"]).unwrap();
    let full = independence_exponent(&p, 1.0, 1, None, &quick()).unwrap();
    assert!((full.value - i).abs() <= 1e-3);
    assert_eq!(independence_exponent(&p, 0.0, 1, None, &quick()).unwrap().value, 0.0);
    assert_eq!(unidirectional_exponent(&p, 0.0, None, &quick()).unwrap().value, 0.0);
    let uni = unidirectional_exponent(&p, 1.0, None, &quick()).unwrap();
    assert!((uni.value - i).abs() <= 1e-3);
    let fe = feasible_exponent(&p, &p.product_of_marginals(), 0.0, 1, None, &quick()).unwrap();
    assert!(fe.value.abs() < 1e-9);
}

#[test]
fn one_way_matches_explicit_single_letter_reply() {
    let mut rng = derive_rng(17, "one-way", &[]);
    let p = random_joint(&mut rng, 0.0);
    let cards = Cardinalities(vec![(3, 1)]);
    for r in [0.1, 0.3] {
        let a = independence_exponent(&p, r, 1, Some(&cards), &quick()).unwrap();
        let b = unidirectional_exponent(&p, r, Some(3), &quick()).unwrap();
        assert!((a.value - b.value).abs() <= 1e-6);
    }
}

/// Dense grid over binary test channels `P_{U|X}`.
#[test]
fn one_way_matches_channel_grid() {
    let p = matrix(&[0.45, 0.05, 0.05, 0.45]);
    let r = 0.5;
    let w = p.weights();
    let h = |v: &[f64]| -> f64 { v.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum() };
    let mut best: f64 = 0.0;
    let steps = 1000;
    for i in 0..=steps {
        let a = i as f64 / steps as f64; // P(U=0 | X=0)
        for j in 0..=steps {
            let b = j as f64 / steps as f64; // P(U=0 | X=1)
            let pu0 = 0.5 * (a + b);
            let hu = h(&[pu0, 1.0 - pu0]);
            let ixu = hu - 0.5 * h(&[a, 1.0 - a]) - 0.5 * h(&[b, 1.0 - b]);
            if ixu > r {
                continue;
            }
            // joint of (U, Y)
            let uy = [
                a * w[0] + b * w[2],
                a * w[1] + b * w[3],
                (1.0 - a) * w[0] + (1.0 - b) * w[2],
                (1.0 - a) * w[1] + (1.0 - b) * w[3],
            ];
            let iuy = hu + h(&[0.5, 0.5]) - h(&uy);
            best = best.max(iuy);
        }
    }
    let rep = unidirectional_exponent(&p, r, Some(2), &quick()).unwrap();
    assert!((rep.value - best).abs() <= 2e-3, "{} vs {best}", rep.value);
}

#[test]
fn sweep_is_monotone_and_below_stein() {
    let mut rng = derive_rng(18, "sweep", &[]);
    let rates: Vec<f64> = (0..8).map(|i| 0.2 * i as f64).collect();
    for _ in 0..3 {
        let p0 = random_joint(&mut rng, 0.0);
        let p1 = random_joint(&mut rng, 0.02);
        let stein = stein_exponent(&p0, &p1).unwrap();
        let reps = feasible_exponent_sweep(&p0, &p1, &rates, 1, None, &quick()).unwrap();
        for w in reps.windows(2) {
            assert!(w[1].value >= w[0].value - 1e-3);
        }
        assert!(reps.iter().all(|r| r.value <= stein + 1e-6 && r.rate_used <= r.rate_limit + 1e-9));
    }
}

#[test]
fn invalid_rate_is_rejected() {
    let p = matrix(&[0.25, 0.25, 0.25, 0.25]);
    assert_eq!(
        independence_exponent(&p, -0.1, 1, None, &quick()).unwrap_err(),
        ExponentError::InvalidRate(-0.1)
    );
}

fn channel(inputs: Vec<Axis>, out: &str, rows: &[f64]) -> Channel {
    Channel::new(inputs, Axis::new(out, 2), rows.chunks(2).map(<[f64]>::to_vec).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A fixed one-round stack attains at least `I(U;Y) + I(V;X|U)` against
    /// independence.
    #[test]
    fn fixed_stack_attains_cross_information(
        w in prop::collection::vec(0.01f64..1.0, 4),
        f in prop::collection::vec(0.0f64..1.0, 2),
        g in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let s: f64 = w.iter().sum();
        let p = matrix(&w.iter().map(|v| v / s).collect::<Vec<_>>());
        let fwd = channel(vec![Axis::new("X", 2)], "U1", &[f[0], 1.0 - f[0], f[1], 1.0 - f[1]]);
        let bwd = channel(
            vec![Axis::new("Y", 2), Axis::new("U1", 2)],
            "V1",
            &g.iter().flat_map(|&v| [v, 1.0 - v]).collect::<Vec<_>>(),
        );
        let stack = ChannelStack::new(2, 2, vec![StackRound { forward: fwd, backward: bwd }]).unwrap();
        let j = stack.joint(&p).unwrap();
        let cross = mutual_information(&j, &["U1"], &["Y"]).unwrap()
            + conditional_mutual_information(&j, &["V1"], &["X"], &["U1"]).unwrap();
        let inner = inner_exponent(&stack, &p, &p.product_of_marginals()).unwrap();
        prop_assert!(inner >= cross - 1e-6, "{} < {}", inner, cross);
        prop_assert!((independence_objective(&stack, &p).unwrap() - cross).abs() < 1e-12);
        prop_assert!(inner <= stein_exponent(&p, &p.product_of_marginals()).unwrap() + 1e-6);
    }
}
