use catalyst_core::protocols::free_sets::{
    max_stabilizer_overlap, min_partial_transpose_eigenvalue, stabilizer_polytope_slack,
};
use catalyst_core::protocols::{isotropic_state, t_state, FreeSetOracle};
use catalyst_core::ComplexMatrix;
use catalyst_core::{NormClass, State, SystemLayout, C64};
use proptest::prelude::*;

fn bloch(r: [f64; 3]) -> State {
    let m = ComplexMatrix::from_vec(
        2,
        2,
        vec![
            C64::new(0.5 * (1.0 + r[2]), 0.0),
            C64::new(0.5 * r[0], -0.5 * r[1]),
            C64::new(0.5 * r[0], 0.5 * r[1]),
            C64::new(0.5 * (1.0 - r[2]), 0.0),
        ],
    )
    .unwrap();
    State::new(m, SystemLayout::single("S", 2), NormClass::Normalized).unwrap()
}

#[test]
fn t_state_overlap_and_slack() {
    let t = t_state();
    let overlap = max_stabilizer_overlap(&t).unwrap();
    assert!((overlap - 0.5 * (1.0 + 1.0 / 3f64.sqrt())).abs() < 1e-12);
    // ℓ₁ distance from the Bloch vector (1,1,1)/√3 to the octahedron
    let slack = stabilizer_polytope_slack(&t).unwrap();
    assert!((slack - (3f64.sqrt() - 1.0)).abs() < 1e-9, "{slack}");
    assert!(!FreeSetOracle::MagicStabilizer.contains(&t).unwrap());
}

#[test]
fn isotropic_partial_transpose_spectrum() {
    // the antisymmetric eigenvalue of the partial transpose is (1 − 2f)/2
    for f in [0.5, 0.6, 0.85, 0.9, 1.0] {
        let s = isotropic_state(f, 2).unwrap();
        let e = min_partial_transpose_eigenvalue(s.matrix(), 2).unwrap();
        assert!((e - (1.0 - 2.0 * f) / 2.0).abs() < 1e-12, "f={f}: {e}");
    }
    let oracle = FreeSetOracle::EntanglementPpt { local_dim: 2 };
    assert!(oracle.contains(&isotropic_state(0.5, 2).unwrap()).unwrap());
    assert!(oracle.contains(&isotropic_state(0.3, 2).unwrap()).unwrap());
    assert!(!oracle.contains(&isotropic_state(0.9, 2).unwrap()).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A qubit is a stabilizer mixture iff |x| + |y| + |z| ≤ 1.
    #[test]
    fn octahedron_membership(theta in 0.0..std::f64::consts::PI, phi in 0.0..std::f64::consts::TAU, len in 0.0..1.0f64) {
        let r = [len * theta.sin() * phi.cos(), len * theta.sin() * phi.sin(), len * theta.cos()];
        let l1 = r.iter().map(|v| v.abs()).sum::<f64>();
        prop_assume!((l1 - 1.0).abs() > 1e-6);
        let s = bloch(r);
        prop_assert_eq!(FreeSetOracle::MagicStabilizer.contains(&s).unwrap(), l1 < 1.0);
        let slack = stabilizer_polytope_slack(&s).unwrap();
        prop_assert!((slack - (l1 - 1.0).max(0.0)).abs() < 1e-8);
    }
}
