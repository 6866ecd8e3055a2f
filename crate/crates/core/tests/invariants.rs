use catalyst_core::catalysis::{
    convert_to_catalytic, simulate_reuse, tradeoff_convert, verify, MultiShotProtocol,
};
use catalyst_core::channel_catalysis::{channel_distance, choi_bound_distance};
use catalyst_core::channels::kraus_from_choi;
use catalyst_core::protocols::{random_channel_protocol, random_protocol};
use catalyst_core::sampling::{random_channel, random_qubit_channel, random_state};
use catalyst_core::states::{matrix_trace_distance, trace_distance};
use catalyst_core::tensor::{cyclic_forward, inverse_permutation};
use catalyst_core::{ComplexMatrix, QuantumOp, State, SystemLayout};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mixed(d: usize) -> State {
    State::maximally_mixed(SystemLayout::single("S", d)).unwrap()
}

/// Δ((1/m) Σᵢ ηᵢ, σ) from a direct simulation of the multi-shot map.
fn averaged_marginal_error(p: &MultiShotProtocol) -> f64 {
    let out = p.simulate().unwrap();
    let d = p.source_dim();
    let mut avg = ComplexMatrix::zeros(d, d);
    for s in &out.marginals {
        avg += &s.matrix().scaled(1.0 / out.marginals.len() as f64);
    }
    matrix_trace_distance(&avg, p.target.matrix()).unwrap()
}

/// (n, m) with 1 ≤ m ≤ n ≤ 3.
fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3).prop_flat_map(|n| (Just(n), 1usize..=n.min(2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn block_conversion_restores_catalyst((n, m) in shape(), seed in any::<u64>()) {
        let p = random_protocol(n, m, 2, seed).unwrap();
        let r = verify(&convert_to_catalytic(&p, &mixed(2)).unwrap()).unwrap();
        prop_assert!(r.catalyst_restoration_error < 1e-9);
        prop_assert!((r.output_error - averaged_marginal_error(&p)).abs() < 1e-9);
        prop_assert!(r.output_error <= p.declared_eps + 1e-9);
        prop_assert!((r.success_probability - p.declared_p).abs() < 1e-9);
        prop_assert!(r.pass, "{:?}", r.failed_checks());
    }

    #[test]
    fn tradeoff_conversion_restores_catalyst(
        (n, m) in shape(),
        seed in any::<u64>(),
        alt in any::<bool>(),
    ) {
        let p = random_protocol(n, m, 2, seed).unwrap();
        let cp = tradeoff_convert(&p, 1, alt).unwrap();
        let r = verify(&cp).unwrap();
        prop_assert!(r.catalyst_restoration_error < 1e-9);
        prop_assert!((r.success_probability - p.declared_p * m as f64 / n as f64).abs() < 1e-9);
        prop_assert!(r.output_error <= p.declared_eps + 1e-9);
        prop_assert!(r.pass, "{:?}", r.failed_checks());
    }

    #[test]
    fn correlation_bound_holds((n, m) in shape(), seed in any::<u64>()) {
        let p = random_protocol(n, m, 2, seed).unwrap();
        let r = verify(&convert_to_catalytic(&p, &mixed(2)).unwrap()).unwrap();
        let c = r.correlation.expect("random targets are pure");
        prop_assert!(c.lhs <= c.eps + 3.0 * c.eps.sqrt() + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reuse_keeps_outputs_identical(seed in any::<u64>(), rounds in 1usize..=3) {
        let p = random_channel_protocol(2, 2, 2, seed).unwrap();
        let r = simulate_reuse(&convert_to_catalytic(&p, &mixed(2)).unwrap(), rounds).unwrap();
        prop_assert!(r.pass, "{:?}", r.failed_checks());
        for round in &r.rounds {
            prop_assert!(round.catalyst_restoration_error < 1e-9);
            prop_assert!(round.output_spread < 1e-9);
        }
    }

    #[test]
    fn diamond_distance_is_bracketed(seed in any::<u64>()) {
        let mut g = rng(seed);
        let a = random_qubit_channel(&mut g).unwrap();
        let b = random_qubit_channel(&mut g).unwrap();
        let d = channel_distance(&a, &b, 1e-9).unwrap();
        let bound = choi_bound_distance(&a, &b).unwrap();
        prop_assert!(d <= bound + 1e-12);
        prop_assert!(d >= bound / 2.0 - 1e-9);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&d));
        let back = channel_distance(&b, &a, 1e-9).unwrap();
        prop_assert!((d - back).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn partial_trace_of_product(seed in any::<u64>(), da in 2usize..=3, db in 2usize..=3) {
        let mut g = rng(seed);
        let a = random_state(SystemLayout::single("A", da), da, &mut g).unwrap();
        let b = random_state(SystemLayout::single("B", db), 1, &mut g).unwrap();
        let ab = a.tensor(&b).unwrap();
        prop_assert!(ab.partial_trace(&["A"]).unwrap().matrix().max_abs_diff(a.matrix()) < 1e-12);
        prop_assert!(ab.partial_trace(&["B"]).unwrap().matrix().max_abs_diff(b.matrix()) < 1e-12);
    }

    #[test]
    fn cyclic_shift_has_order_n(seed in any::<u64>(), n in 2usize..=4) {
        let layout = SystemLayout::uniform("q", 2, n);
        let s = random_state(layout, 3, &mut rng(seed)).unwrap();
        let perm = cyclic_forward(n);
        let mut t = s.clone();
        for _ in 0..n {
            t = t.permute(&perm).unwrap();
        }
        prop_assert!(t.matrix().max_abs_diff(s.matrix()) < 1e-12);
        let back = s.permute(&perm).unwrap().permute(&inverse_permutation(&perm)).unwrap();
        prop_assert!(back.matrix().max_abs_diff(s.matrix()) < 1e-12);
    }

    #[test]
    fn choi_kraus_round_trip(seed in any::<u64>(), count in 1usize..=4) {
        let l = SystemLayout::single("A", 2);
        let c = random_channel(l.clone(), SystemLayout::single("B", 3), count, &mut rng(seed)).unwrap();
        let j = c.choi().unwrap();
        let back = QuantumOp::from_kraus(l, SystemLayout::single("B", 3), kraus_from_choi(&j, 2, 3).unwrap()).unwrap();
        prop_assert!(back.choi().unwrap().max_abs_diff(&j) < 1e-10);
        prop_assert!(c.is_trace_preserving());
    }

    #[test]
    fn trace_distance_is_a_metric(seed in any::<u64>()) {
        let mut g = rng(seed);
        let l = SystemLayout::single("S", 3);
        let s: Vec<State> = (0..3).map(|_| random_state(l.clone(), 2, &mut g).unwrap()).collect();
        let d = |i: usize, j: usize| trace_distance(&s[i], &s[j]).unwrap();
        prop_assert!(d(0, 0) < 1e-12);
        prop_assert!((d(0, 1) - d(1, 0)).abs() < 1e-12);
        prop_assert!(d(0, 1) <= 1.0 + 1e-12);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
    }

    #[test]
    fn channels_contract_trace_distance(seed in any::<u64>()) {
        let mut g = rng(seed);
        let l = SystemLayout::single("A", 2);
        let n = random_qubit_channel(&mut g).unwrap();
        let a = random_state(l.clone(), 2, &mut g).unwrap();
        let b = random_state(l, 1, &mut g).unwrap();
        let before = trace_distance(&a, &b).unwrap();
        let after = trace_distance(&n.apply(&a).unwrap(), &n.apply(&b).unwrap()).unwrap();
        prop_assert!(after <= before + 1e-12);
    }
}
