use colht::exponent::{rate_of, Cardinalities, ChannelStack, StackRound};
use colht::prob::{Axis, Channel, Pmf};
use colht::protocol::*;
use colht::seed::derive_rng;
use colht::types::{is_typical, joint_type, TypeStats, TypicalityParams};
use colht::JointPmf;
use rand::Rng;

fn matrix(w: &[f64]) -> JointPmf {
    JointPmf::from_matrix(&[w[..2].to_vec(), w[2..].to_vec()], "X", "Y").unwrap()
}

fn p0() -> JointPmf {
    matrix(&[0.4, 0.1, 0.15, 0.35])
}

fn binary_stack(seed: u64) -> ChannelStack {
    ChannelStack::random(2, 2, &Cardinalities::uniform(2, 2, 1), &mut derive_rng(seed, "stack", &[])).unwrap()
}

fn protocol(p: &JointPmf, stack: ChannelStack, n: usize, deltas: Deltas, seed: u64) -> Protocol {
    let books = build_codebooks(p, &stack, n, &deltas, seed).unwrap();
    let cfg = TrialConfig {
        stack,
        deltas,
        master_seed: seed,
    };
    Protocol::new(p, cfg, books).unwrap()
}

fn seq(mut v: usize, n: usize, k: usize) -> Vec<usize> {
    let mut s = vec![0; n];
    for i in (0..n).rev() {
        s[i] = v % k;
        v /= k;
    }
    s
}

/// Joint typicality of named sequences against the marginal of `joint` on
/// those names.
fn typical(joint: &JointPmf, named: &[(&str, &[usize])], delta: f64) -> bool {
    let names: Vec<&str> = named.iter().map(|(n, _)| *n).collect();
    let m = joint.marginalize(&names).unwrap();
    let order: Vec<&[usize]> = m
        .axes()
        .iter()
        .map(|a| named.iter().find(|(n, _)| *n == a.name).unwrap().1)
        .collect();
    let t: TypeStats = joint_type(&order, &m.sizes()).unwrap();
    is_typical(&t, &m, TypicalityParams::joint(delta)).unwrap()
}

/// Straight-loop K=1 enumerator written against the codebook words only.
fn straight_loop(p: &Protocol, h0: &JointPmf, h1: &JointPmf) -> (f64, f64) {
    let n = p.n();
    let d = p.config().deltas;
    let joint = p.config().stack.joint(h0).unwrap();
    let books = p.books();
    let word = |j: usize, prefix: &[usize], m: usize| -> Vec<usize> {
        books.word(j, prefix, m).iter().map(|&s| s as usize).collect()
    };
    let (mut alpha, mut beta) = (0.0, 0.0);
    for xi in 0..1usize << n {
        let x = seq(xi, n, 2);
        for yi in 0..1usize << n {
            let y = seq(yi, n, 2);
            let us: Vec<usize> = (0..books.sizes()[0])
                .filter(|&m| typical(&joint, &[("U1", &word(0, &[], m)), ("X", &x)], d.delta))
                .collect();
            let mut acc = 0.0;
            for &mu in &us {
                let u = word(0, &[], mu);
                if !typical(&joint, &[("U1", &u), ("Y", &y)], d.delta_b) {
                    continue;
                }
                let vs: Vec<usize> = (0..books.sizes()[1])
                    .filter(|&m| {
                        typical(&joint, &[("U1", &u), ("V1", &word(1, &[mu], m)), ("Y", &y)], d.delta_b)
                    })
                    .collect();
                let ok = vs
                    .iter()
                    .filter(|&&mv| {
                        typical(&joint, &[("U1", &u), ("V1", &word(1, &[mu], mv)), ("X", &x)], d.delta_final)
                    })
                    .count();
                if !vs.is_empty() {
                    acc += ok as f64 / vs.len() as f64;
                }
            }
            if !us.is_empty() {
                acc /= us.len() as f64;
            }
            let (mut q0, mut q1) = (1.0, 1.0);
            for i in 0..n {
                q0 *= h0.get(&[x[i], y[i]]);
                q1 *= h1.get(&[x[i], y[i]]);
            }
            alpha += q0 * (1.0 - acc);
            beta += q1 * acc;
        }
    }
    (alpha, beta)
}

#[test]
fn exact_errors_match_straight_loop() {
    let p = p0();
    let h1 = p.product_of_marginals();
    for seed in 0..3 {
        let pr = protocol(&p, binary_stack(seed), 4, Deltas::from_base(0.15), seed);
        let e = exact_errors(&pr, &p, &h1).unwrap();
        let (a, b) = straight_loop(&pr, &p, &h1);
        assert!((e.alpha - a).abs() <= 1e-12, "{} vs {a}", e.alpha);
        assert!((e.beta - b).abs() <= 1e-12, "{} vs {b}", e.beta);
    }
}

#[test]
fn vacuous_and_empty_rules() {
    let p = p0();
    let h1 = p.product_of_marginals();
    let stack = binary_stack(1);
    let books = build_codebooks_with_rates(&p, &stack, 4, &[0.5, 0.5], 1).unwrap();
    let cfg = TrialConfig {
        stack,
        deltas: Deltas::new(1.0, 1.0, 1.0).unwrap(),
        master_seed: 1,
    };
    let pr = Protocol::new(&p, cfg, books).unwrap();
    assert_eq!(exact_errors(&pr, &p, &h1).unwrap(), ExactErrors { alpha: 0.0, beta: 1.0 });
    let mc = monte_carlo_errors(&pr, &p, &h1, 200).unwrap();
    assert_eq!((mc.alpha_hat, mc.beta_hat), (0.0, 1.0));
    assert_eq!(mc.slope, Slope::Estimate(0.0));

    // zero slack and a Y marginal with no exact type at n = 4: B never
    // finds y typical, so the rule always rejects
    let pr = protocol(&p, ChannelStack::trivial(2, 2, 1), 4, Deltas::new(0.0, 0.0, 0.0).unwrap(), 1);
    assert_eq!(exact_errors(&pr, &p, &h1).unwrap(), ExactErrors { alpha: 1.0, beta: 0.0 });
}

#[test]
fn censored_slope_when_nothing_accepted() {
    let p = p0();
    let h1 = p.product_of_marginals();
    let pr = protocol(&p, binary_stack(1), 4, Deltas::new(0.0, 0.0, 0.0).unwrap(), 1);
    let mc = monte_carlo_errors(&pr, &p, &h1, 64).unwrap();
    assert_eq!(mc.beta_hat, 0.0);
    assert_eq!(mc.slope, Slope::Censored(6.0 / 4.0));
    assert!(monte_carlo_errors(&pr, &p, &h1, 0).is_err());
}

#[test]
fn monte_carlo_tracks_exact_errors() {
    let p = p0();
    let h1 = p.product_of_marginals();
    let trials = 2000u64;
    let mut inside = 0;
    let configs = 100;
    for c in 0..configs {
        let pr = protocol(&p, binary_stack(100 + c), 4, Deltas::from_base(0.1 + 0.05 * (c % 3) as f64), c);
        let e = exact_errors(&pr, &p, &h1).unwrap();
        let mc = monte_carlo_errors(&pr, &p, &h1, trials).unwrap();
        let close = |hat: f64, exact: f64| {
            let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
            (hat - exact).abs() <= 3.0 * sigma + 1e-12
        };
        if close(mc.alpha_hat, e.alpha) && close(mc.beta_hat, e.beta) {
            inside += 1;
        }
        assert!(mc.alpha_ci.0 <= mc.alpha_hat && mc.alpha_hat <= mc.alpha_ci.1);
    }
    assert!(inside >= 99 * configs / 100, "{inside} of {configs}");
}

#[test]
fn exchanged_rate_within_budget() {
    let p = p0();
    for seed in 0..5 {
        let stack = binary_stack(seed);
        let d = Deltas::from_base(0.05);
        for n in [4, 8, 12] {
            let books = build_codebooks(&p, &stack, n, &d, seed).unwrap();
            let eps = d.delta * 4.0 + d.delta_b * 4.0;
            let budget = rate_of(&stack, &p).unwrap() + eps + 2.0 / n as f64;
            assert!(books.exchanged_rate() <= budget + 1e-12);
        }
    }
}

#[test]
fn codebook_symbols_follow_their_law() {
    let p = p0();
    let fwd = Channel::constant(vec![Axis::new("X", 2)], "U1", &Pmf::new(vec![0.3, 0.7]).unwrap()).unwrap();
    let bwd = Channel::constant(vec![Axis::new("Y", 2), Axis::new("U1", 2)], "V1", &Pmf::uniform(1)).unwrap();
    let stack = ChannelStack::new(2, 2, vec![StackRound { forward: fwd, backward: bwd }]).unwrap();
    let n = 10_000;
    let books = build_codebooks_with_rates(&p, &stack, n, &[3.0 / n as f64, 0.0], 5).unwrap();
    assert_eq!(books.sizes(), &[8, 1]);
    let mut zeros = 0usize;
    for m in 0..8 {
        zeros += books.word(0, &[], m).iter().filter(|&&s| s == 0).count();
    }
    let freq = zeros as f64 / (8 * n) as f64;
    assert!((freq - 0.3).abs() <= 0.01, "{freq}");
}

/// With single-letter messages, δ = 1/4 and uniform marginals, the H0
/// rejection probability decays along blocklengths where `n δ` is whole.
#[test]
fn rejection_probability_decays() {
    let p = matrix(&[0.45, 0.05, 0.05, 0.45]);
    let h1 = p.product_of_marginals();
    let mut last = 1.0;
    for n in [4, 8, 12] {
        let pr = protocol(&p, ChannelStack::trivial(2, 2, 1), n, Deltas::from_base(0.25), 9);
        let a = exact_errors(&pr, &p, &h1).unwrap().alpha;
        assert!(a < last, "n={n}: {a} >= {last}");
        last = a;
    }
    assert!(last < 0.1);
    // two-sided binomial tail below n/4 and above 3n/4 at n = 12
    let oracle = 2.0 * (1.0 + 12.0 + 66.0) / 4096.0;
    assert!((last - oracle).abs() < 1e-12);
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Compensated(f64, f64);

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.0 + v;
        self.1 += if self.0.abs() >= v.abs() { (self.0 - t) + v } else { (v - t) + self.0 };
        self.0 = t;
    }

    fn value(&self) -> f64 {
        self.0 + self.1
    }
}

/// Sequence-level enumeration of the one-bit rule.
fn one_bit_by_sequences(p0: &JointPmf, p1: &JointPmf, n: usize, delta: f64) -> (f64, f64) {
    let px = p0.marginal_pmf("X").unwrap();
    let py = p0.marginal_pmf("Y").unwrap();
    let typ = |v: usize, m: &Pmf| {
        let s = seq(v, n, 2);
        let t = colht::types::empirical_type(&s, 2).unwrap();
        is_typical(&t, m, TypicalityParams::marginal(delta)).unwrap()
    };
    let tx: Vec<bool> = (0..1 << n).map(|v| typ(v, &px)).collect();
    let ty: Vec<bool> = (0..1 << n).map(|v| typ(v, &py)).collect();
    let (w0, w1) = (p0.weights(), p1.weights());
    let (mut alpha, mut beta) = (Compensated::default(), Compensated::default());
    for x in 0..1usize << n {
        for y in 0..1usize << n {
            let accept = tx[x] && ty[y];
            let (mut q0, mut q1) = (1.0, 1.0);
            for i in 0..n {
                let c = ((x >> i) & 1) * 2 + ((y >> i) & 1);
                q0 *= w0[c];
                q1 *= w1[c];
            }
            if accept {
                beta.add(q1);
            } else {
                alpha.add(q0);
            }
        }
    }
    (alpha.value(), beta.value())
}

#[test]
fn one_bit_types_match_sequences() {
    let p = p0();
    let q = matrix(&[0.1, 0.2, 0.2, 0.5]);
    for (n, delta) in [(1, 0.1), (4, 0.1), (7, 0.15), (10, 0.05), (12, 0.1)] {
        let r = zero_rate_one_bit(&p, &q, n, delta).unwrap();
        let (a, b) = one_bit_by_sequences(&p, &q, n, delta);
        assert!((r.alpha - a).abs() <= 1e-12 * a.max(1e-300), "n={n}: {} vs {a}", r.alpha);
        assert!((r.beta - b).abs() <= 1e-12 * b.max(1e-300), "n={n}: {} vs {b}", r.beta);
    }
    let r = zero_rate_one_bit(&p, &q, 5, 1.0).unwrap();
    assert_eq!(r.alpha, 0.0);
    assert!((r.beta - 1.0).abs() < 1e-12);
    assert!(matches!(
        zero_rate_one_bit(&p, &matrix(&[0.5, 0.5, 0.0, 0.0]), 5, 0.1),
        Err(ProtocolError::SupportViolation { x: 1, y: 0 })
    ));
}

#[test]
fn one_bit_against_independence_decays_slowly() {
    let p = p0();
    let h1 = p.product_of_marginals();
    let mut slopes = Vec::new();
    for n in [50, 100, 200] {
        let delta = (n as f64).powf(-1.0 / 3.0);
        slopes.push(zero_rate_one_bit(&p, &h1, n, delta).unwrap().slope);
    }
    assert!(slopes.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{slopes:?}");
    assert!(slopes[2] < 0.01);
}

#[test]
fn converse_bound_holds_on_random_codes() {
    let mut rng = derive_rng(21, "converse", &[]);
    let p = p0();
    let mut checked = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=4);
        let f = rng.gen_range(1..=4);
        let g = rng.gen_range(1..=4);
        let code = InteractiveCode::random(n, 2, 2, f, g, &mut rng);
        match converse_bound_check(&code, &p) {
            Ok(r) => {
                assert!(r.slack >= -1e-9, "{r:?}");
                checked += 1;
            }
            Err(ProtocolError::DegenerateCode) => {}
            Err(e) => panic!("{e}"),
        }
    }
    assert!(checked > 150);
}

#[test]
fn converse_bound_for_codes_ignoring_messages() {
    let mut rng = derive_rng(22, "x-only", &[]);
    let p = p0();
    for _ in 0..20 {
        let mut code = InteractiveCode::random(3, 2, 2, 2, 3, &mut rng);
        let by_x: Vec<bool> = (0..8).map(|_| rng.gen_bool(0.5)).collect();
        for x in 0..8 {
            for b in 0..3 {
                code.accept[x * 3 + b] = by_x[x];
            }
        }
        if let Ok(r) = converse_bound_check(&code, &p) {
            // beta is the H0 mass of the acceptance region under P_X
            assert!(r.lhs <= 1e-12, "{r:?}");
            assert!(r.slack >= -1e-9);
        }
    }
}

fn random_joint(rng: &mut impl Rng, sizes: &[usize], names: &[&str]) -> JointPmf {
    let cells: usize = sizes.iter().product();
    let mut w: Vec<f64> = (0..cells).map(|_| rng.gen::<f64>().powi(3)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let axes = names.iter().zip(sizes).map(|(n, &k)| Axis::new(*n, k)).collect();
    JointPmf::new(axes, w).unwrap()
}

#[test]
fn telescoping_identity() {
    let mut rng = derive_rng(23, "identity", &[]);
    // independent letters: every cross term vanishes
    let pa = Pmf::new(vec![0.2, 0.8]).unwrap();
    let pb = Pmf::new(vec![0.6, 0.1, 0.3]).unwrap();
    let iid = JointPmf::product(&[("A1", &pa), ("A2", &pa), ("B1", &pb), ("B2", &pb)]).unwrap();
    let r = csiszar_identity_check(&iid, &["A1", "A2"], &["B1", "B2"], &[]).unwrap();
    assert!(r.lhs.abs() <= 1e-12 && r.rhs.abs() <= 1e-12 && r.deviation <= 1e-12);

    for _ in 0..20 {
        let j = random_joint(&mut rng, &[3, 2, 3, 2], &["A1", "A2", "B1", "B2"]);
        let r = csiszar_identity_check(&j, &["A1", "A2"], &["B1", "B2"], &[]).unwrap();
        assert!(r.deviation <= 1e-9);
    }

    // C a deterministic function of (A1, B3)
    for _ in 0..5 {
        let base = random_joint(&mut rng, &[2; 6], &["A1", "A2", "A3", "B1", "B2", "B3"]);
        let f = Channel::from_fn(
            vec![Axis::new("A1", 2), Axis::new("B3", 2)],
            Axis::new("C", 3),
            |i| {
                let mut r = vec![0.0; 3];
                r[i[0] + i[1]] = 1.0;
                r
            },
        )
        .unwrap();
        let j = colht::prob::chain(&base, &f).unwrap();
        let r = csiszar_identity_check(&j, &["A1", "A2", "A3"], &["B1", "B2", "B3"], &["C"]).unwrap();
        assert!(r.deviation <= 1e-9);
    }
}
