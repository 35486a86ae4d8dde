use colht::prob::{make_pmf, Pmf};
use colht::types::*;
use colht::JointPmf;
use proptest::prelude::*;

fn pmf_strategy(k: usize) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        make_pmf(&w.iter().map(|v| v / s).collect::<Vec<_>>()).unwrap()
    })
}

#[test]
fn class_sizes_sum_to_all_sequences() {
    for k in 1..=4usize {
        for n in 1..=12u64 {
            let types = enumerate_types(n, k).unwrap();
            assert_eq!(types.len() as u64, type_count(n, k));
            assert!((types.len() as f64) <= ((n + 1) as f64).powi(k as i32));
            let total: u128 = types
                .iter()
                .map(|t| type_class_size(t).exact.expect("fits in 64 bits") as u128)
                .sum();
            assert_eq!(total, (k as u128).pow(n as u32), "n={n} k={k}");
        }
    }
}

#[test]
fn stars_and_bars_count() {
    assert_eq!(enumerate_types(10, 3).unwrap().len(), 66);
    assert_eq!(enumerate_types(3, 2).unwrap().len(), 4);
    assert_eq!(enumerate_types(1, 5).unwrap().len(), 5);
}

#[test]
fn pair_counts_match_nested_loop() {
    let x = [0, 1, 1, 0, 1, 1, 0];
    let y = [1, 1, 0, 0, 1, 1, 1];
    let t = joint_type(&[&x, &y], &[2, 2]).unwrap();
    let mut oracle = [0u64; 4];
    for a in 0..2 {
        for b in 0..2 {
            for i in 0..x.len() {
                if x[i] == a && y[i] == b {
                    oracle[a * 2 + b] += 1;
                }
            }
        }
    }
    assert_eq!(t.counts(), &oracle);
}

proptest! {
    #[test]
    fn class_size_sandwich(counts in prop::collection::vec(0u64..15, 1..5)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let k = counts.len();
        let t = TypeStats::from_counts(vec![k], counts).unwrap();
        let n = t.n() as f64;
        let nh = n * t.entropy();
        let log2_size = type_class_size(&t).log2;
        prop_assert!(log2_size <= nh + 1e-9);
        prop_assert!(log2_size >= nh - k as f64 * (n + 1.0).log2() - 1e-9);
    }

    #[test]
    fn iid_probability_depends_on_type_only(
        p in pmf_strategy(3),
        seq in prop::collection::vec(0usize..3, 1..=10),
    ) {
        let t = empirical_type(&seq, 3).unwrap();
        let direct: f64 = seq.iter().map(|&a| p.get(a)).product();
        let by_type = iid_log_prob(&t, &p).unwrap().exp2();
        prop_assert!((by_type - direct).abs() <= 1e-10 * direct);
    }
}

/// Every pair `(x, y)` of binary sequences with `x` δ-typical and the pair
/// conditionally δ'-typical given `x` is jointly (δ+δ')-typical and has a
/// (δ+δ')|X|-typical `y`.
#[test]
fn typicality_composes_exhaustively() {
    let p = JointPmf::from_matrix(&[vec![0.3, 0.2], vec![0.1, 0.4]], "X", "Y").unwrap();
    let px = p.marginal_pmf("X").unwrap();
    let py = p.marginal_pmf("Y").unwrap();
    let pairs = [(0.05, 0.1), (0.1, 0.1), (0.15, 0.25), (0.2, 0.05)];
    let mut premises = 0u64;
    for n in 1..=8usize {
        for xm in 0..1usize << n {
            let x: Vec<usize> = (0..n).map(|i| (xm >> i) & 1).collect();
            let tx = empirical_type(&x, 2).unwrap();
            for ym in 0..1usize << n {
                let y: Vec<usize> = (0..n).map(|i| (ym >> i) & 1).collect();
                let txy = joint_type(&[&x, &y], &[2, 2]).unwrap();
                let ty = empirical_type(&y, 2).unwrap();
                for &(d, d2) in &pairs {
                    if !(is_typical(&tx, &px, TypicalityParams::marginal(d)).unwrap()
                        && is_typical(&txy, &p, TypicalityParams::conditional(d2)).unwrap())
                    {
                        continue;
                    }
                    premises += 1;
                    assert!(is_typical(&txy, &p, TypicalityParams::joint(d + d2)).unwrap());
                    assert!(is_typical(&ty, &py, TypicalityParams::marginal((d + d2) * 2.0)).unwrap());
                }
            }
        }
    }
    assert!(premises > 1000);
}

/// `P^n` mass of the δ-typical set with δ = n^{-1/3}, by type aggregation,
/// against the Chebyshev envelope `1 - sum_a P(a)(1 - P(a)) / (n δ^2)`.
#[test]
fn typical_set_coverage_envelope() {
    for p in [0.1, 0.3, 0.5] {
        let pmf = make_pmf(&[p, 1.0 - p]).unwrap();
        let c = 2.0 * p * (1.0 - p);
        let mut last_bound = f64::NEG_INFINITY;
        let mut tail_deficit: f64 = 0.0;
        for n in 1..=200u64 {
            let delta = (n as f64).powf(-1.0 / 3.0);
            let mut mass = 0.0;
            for t in enumerate_types(n, 2).unwrap() {
                if is_typical(&t, &pmf, TypicalityParams::marginal(delta)).unwrap() {
                    mass += (type_class_size(&t).log2 + iid_log_prob(&t, &pmf).unwrap()).exp2();
                }
            }
            let bound = 1.0 - c / (n as f64 * delta * delta);
            assert!(mass >= bound - 1e-12, "p={p} n={n}: {mass} < {bound}");
            assert!(mass <= 1.0 + 1e-12);
            assert!(bound > last_bound);
            last_bound = bound;
            if n >= 150 {
                tail_deficit = tail_deficit.max(1.0 - mass);
            }
        }
        assert!(tail_deficit < 1e-4, "p={p}: {tail_deficit}");
    }
}
