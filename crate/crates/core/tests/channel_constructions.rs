use std::time::Instant;

use catalyst_core::channel_catalysis::{
    build_channel_catalyst, catalytic_channel_convert, choi_bound_distance, mutual_info_criterion,
    ChannelCode, MARGINAL_TOL, TELESCOPING_TOL,
};
use catalyst_core::channels::{amplitude_damping, depolarizing, measure_prepare};
use catalyst_core::{QuantumOp, SystemLayout};

fn qubit() -> SystemLayout {
    SystemLayout::single("A", 2)
}

#[test]
fn catalyst_branches_match_hand_assembly() {
    let n = depolarizing(qubit(), 0.2).unwrap();
    let q = 0.3;
    let code = ChannelCode::measure_and_prepare(2, 2, 2, q).unwrap();
    let p = code
        .apply(
            &QuantumOp::tensor_power(&n, 2)
                .relabeled(
                    SystemLayout::uniform("A", 2, 2),
                    SystemLayout::uniform("B", 2, 2),
                )
                .unwrap(),
        )
        .unwrap();
    let c = build_channel_catalyst(&n, &p, 2).unwrap();
    // slot 1 of P² with slot 2 traced: (1 − q)N + q·MP∘N; the other branch is N itself
    let mp_n = n.then(&measure_prepare(qubit()).unwrap()).unwrap();
    let branch1 = QuantumOp::mixture(vec![(1.0 - q, n.clone()), (q, mp_n)]).unwrap();
    let j1 = c.branch(1).unwrap().op.choi().unwrap();
    let j2 = c.branch(2).unwrap().op.choi().unwrap();
    assert!(j1.max_abs_diff(&branch1.choi().unwrap()) < 1e-10);
    assert!(j2.max_abs_diff(&n.choi().unwrap()) < 1e-10);
    assert!((c.branch(1).unwrap().weight - 0.5).abs() < 1e-15);
}

#[test]
fn two_slot_construction_for_both_codes() {
    let start = Instant::now();
    let n = depolarizing(qubit(), 0.2).unwrap();
    for code in [
        ChannelCode::trivial(2, 2, 2).unwrap(),
        ChannelCode::measure_and_prepare(2, 2, 2, 0.3).unwrap(),
    ] {
        let r = catalytic_channel_convert(&n, &code, &n, 2, 1e-9, true).unwrap();
        assert!(r.pass, "{}: {:?}", code.name, r.checks);
        assert!(r.g2_marginal.max <= MARGINAL_TOL);
        assert!(r.g3_marginal.max <= MARGINAL_TOL);
        assert!(r.g3_vs_target.weighted <= r.eps + 1e-7);
        assert!(r.telescoping.iter().all(|t| *t <= TELESCOPING_TOL));
        assert!(r.marginal_channel_distance <= r.eps + 1e-7);
        assert!(r.mutual_information.as_ref().unwrap().pass);
    }
    assert!(start.elapsed().as_secs_f64() < 120.0);
}

#[test]
fn measure_and_prepare_code_has_measured_eps() {
    // ‖P² − N⊗N‖_⋄ for post = (1 − q)id + q·MP⊗MP is q‖N⊗N − MP∘N ⊗ MP∘N‖_⋄
    let n = depolarizing(qubit(), 0.2).unwrap();
    let code = ChannelCode::measure_and_prepare(2, 2, 2, 0.3).unwrap();
    let r = catalytic_channel_convert(&n, &code, &n, 2, 1e-9, false).unwrap();
    assert!((r.eps - 0.36).abs() < 1e-6, "eps {}", r.eps);
    let trivial = catalytic_channel_convert(
        &n,
        &ChannelCode::trivial(2, 2, 2).unwrap(),
        &n,
        2,
        1e-9,
        false,
    )
    .unwrap();
    assert_eq!(trivial.eps, 0.0);
    assert!(trivial.g3_vs_target.max < 1e-12);
}

#[test]
fn non_unital_source() {
    let n = amplitude_damping(qubit(), 0.3).unwrap();
    let code = ChannelCode::measure_and_prepare(2, 2, 2, 0.1).unwrap();
    let r = catalytic_channel_convert(&n, &code, &n, 2, 1e-9, false).unwrap();
    assert!(r.pass, "{:?}", r.checks);
}

#[test]
fn mutual_information_criterion_orders_channels() {
    let id = QuantumOp::identity(qubit());
    let dead = depolarizing(qubit(), 1.0).unwrap();
    assert!(
        mutual_info_criterion(&id, &dead, 1e-9)
            .unwrap()
            .transformable
    );
    assert!(
        !mutual_info_criterion(&dead, &id, 1e-9)
            .unwrap()
            .transformable
    );
}

#[test]
fn slot_limits() {
    let n = depolarizing(qubit(), 0.2).unwrap();
    let code = ChannelCode::trivial(2, 2, 4).unwrap();
    assert!(catalytic_channel_convert(&n, &code, &n, 4, 1e-9, false).is_err());
    assert!(choi_bound_distance(&n, &QuantumOp::identity(SystemLayout::single("A", 3))).is_err());
}
