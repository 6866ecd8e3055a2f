mod common;

use std::collections::BTreeMap;

use catalyst_core::catalysis::{
    block_catalyst_shape, build_block_catalyst, convert_to_catalytic, convert_to_catalytic_with,
    simulate_reuse, tradeoff_convert, verify, FailureModel, Variant, VerificationReport,
};
use catalyst_core::protocols::{
    build_protocol, five_qubit_t_protocol, product_protocol, random_protocol,
    recurrence_deterministic, recurrence_protocol,
};
use catalyst_core::states::trace_distance;
use catalyst_core::tensor::{eigh, kron, singular_values, spectral_map, trace_norm};
use catalyst_core::{State, SystemLayout};
use common::recurrence_closed_form;

fn mixed(d: usize) -> State {
    State::maximally_mixed(SystemLayout::single("S", d)).unwrap()
}

fn check(r: &VerificationReport, name: &str) -> f64 {
    r.checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("no check {name}"))
        .value
}

#[test]
fn recurrence_matches_closed_form() {
    for f in [0.6, 0.75, 0.85, 0.95] {
        let p = recurrence_protocol(f).unwrap();
        let (f_out, success) = recurrence_closed_form(f);
        assert!(
            (p.declared_p - success).abs() < 1e-12,
            "f={f}: p {} vs {success}",
            p.declared_p
        );
        assert!(
            (p.declared_eps - (1.0 - f_out)).abs() < 1e-12,
            "f={f}: eps {}",
            p.declared_eps
        );
        assert!(f_out > f);
    }
}

#[test]
fn product_marginals_equal_single_run() {
    let single = recurrence_protocol(0.85).unwrap();
    let double = product_protocol(&single, 2).unwrap();
    assert_eq!((double.n_in, double.m_out), (4, 2));
    let out = double.simulate().unwrap();
    for e in &out.marginal_errors {
        assert!((e - single.declared_eps).abs() < 1e-12);
    }
    assert!((out.p - single.declared_p.powi(2)).abs() < 1e-12);
}

#[test]
fn block_conversion_of_two_recurrence_rounds() {
    let single = recurrence_protocol(0.85).unwrap();
    let p = product_protocol(&single, 2).unwrap();
    let cp = convert_to_catalytic(&p, &mixed(4)).unwrap();
    assert_eq!((cp.block_size, cp.slots), (2, 2));
    let r = verify(&cp).unwrap();
    assert!(r.pass, "{:?}", r.failed_checks());
    let (f_out, p1) = recurrence_closed_form(0.85);
    assert!(r.catalyst_restoration_error < 1e-10);
    assert!((r.output_error - (1.0 - f_out)).abs() < 1e-9);
    assert!((r.output_error - p.simulate().unwrap().max_error()).abs() < 1e-9);
    assert!((r.success_probability - p1 * p1).abs() < 1e-9);
    assert!((r.success_probability - 0.6724).abs() < 1e-12);
}

#[test]
fn block_catalyst_matches_materialized_mixture() {
    let p = product_protocol(&recurrence_protocol(0.85).unwrap(), 2).unwrap();
    let omega = build_block_catalyst(&p, &mixed(4)).unwrap();
    assert_eq!(omega.len(), 2);
    // branch 1: η restricted to its first output, padded with π; branch 2: ρ ⊗ ρ
    let rho = &p.source;
    let joint = p
        .map
        .apply_matrix(rho.tensor_power(4).unwrap().matrix())
        .unwrap();
    let eta = State::new(
        joint.scaled(1.0 / joint.trace().re),
        SystemLayout::uniform("S", 4, 2),
        catalyst_core::NormClass::Normalized,
    )
    .unwrap();
    let b1 = eta
        .partial_trace_positions(&[0])
        .unwrap()
        .tensor(&mixed(4).relabeled("P"))
        .unwrap();
    let b2 = rho.tensor(&rho.relabeled("R")).unwrap();
    for (label, expected) in [(1, &b1), (2, &b2)] {
        let body = &omega.branch(label).unwrap().body;
        assert_eq!(body.dim(), 16);
        assert!(
            body.matrix().max_abs_diff(expected.matrix()) < 1e-12,
            "branch {label}"
        );
        assert!((omega.branch(label).unwrap().weight - 0.5).abs() < 1e-15);
    }
}

#[test]
fn catalyst_shapes() {
    let s = block_catalyst_shape(15, 5).unwrap();
    assert_eq!((s.block_size, s.branches), (3, 5));
    let s = block_catalyst_shape(4, 2).unwrap();
    assert_eq!((s.block_size, s.branches), (2, 2));
    assert!(block_catalyst_shape(2, 3).is_err());
}

#[test]
fn reuse_restores_catalyst_every_round() {
    let p = product_protocol(&recurrence_deterministic(0.85).unwrap(), 2).unwrap();
    let cp = convert_to_catalytic(&p, &mixed(4)).unwrap();
    let r = simulate_reuse(&cp, 3).unwrap();
    assert!(r.pass, "{:?}", r.failed_checks());
    assert_eq!(r.rounds.len(), 3);
    for round in &r.rounds {
        assert!(round.catalyst_restoration_error < 1e-10);
        assert!(round.output_spread < 1e-10);
        for e in &round.output_errors {
            assert!(*e <= p.declared_eps + 1e-9);
        }
    }
    assert_eq!(r.rounds[2].output_errors.len(), 3);
}

#[test]
fn reuse_needs_a_deterministic_protocol() {
    let p = product_protocol(&recurrence_protocol(0.85).unwrap(), 2).unwrap();
    let cp = convert_to_catalytic(&p, &mixed(4)).unwrap();
    assert!(simulate_reuse(&cp, 2).is_err());
}

#[test]
fn five_qubit_tradeoff_and_alternative_catalyst() {
    let p = five_qubit_t_protocol(0.05).unwrap();
    let a = verify(&tradeoff_convert(&p, 1, false).unwrap()).unwrap();
    let b = verify(&tradeoff_convert(&p, 1, true).unwrap()).unwrap();
    assert!(a.pass && b.pass);
    assert_eq!(a.variant, Variant::Tradeoff);
    assert_eq!(b.variant, Variant::TradeoffAlternative);
    assert_eq!(a.slots, 5);
    assert!((a.success_probability - p.declared_p / 5.0).abs() < 1e-9);
    assert!((a.output_error - p.declared_eps).abs() < 1e-9);
    assert!((a.success_probability - b.success_probability).abs() < 1e-9);
    assert!((a.output_error - b.output_error).abs() < 1e-9);
}

#[test]
fn clean_t_states_are_accepted_one_time_in_six() {
    let p = five_qubit_t_protocol(0.0).unwrap();
    assert!((p.declared_p - 1.0 / 6.0).abs() < 1e-12);
    let r = verify(&tradeoff_convert(&p, 1, false).unwrap()).unwrap();
    assert!((r.success_probability - 1.0 / 30.0).abs() < 1e-12);
}

#[test]
fn random_five_to_two_tradeoff() {
    let p = random_protocol(5, 2, 2, 11).unwrap();
    let r = verify(&tradeoff_convert(&p, 1, false).unwrap()).unwrap();
    assert!(r.pass, "{:?}", r.failed_checks());
    assert_eq!(r.slots, 5);
    assert!((r.success_probability - 2.0 * p.declared_p / 5.0).abs() < 1e-9);
    let two = tradeoff_convert(&p, 2, false).unwrap();
    assert_eq!(two.slots, 3);
    assert!(tradeoff_convert(&p, 3, false).is_err());
}

#[test]
fn correlation_bound_on_pure_targets() {
    let runs = [
        convert_to_catalytic(
            &product_protocol(&recurrence_protocol(0.85).unwrap(), 2).unwrap(),
            &mixed(4),
        )
        .unwrap(),
        tradeoff_convert(&five_qubit_t_protocol(0.05).unwrap(), 1, false).unwrap(),
        tradeoff_convert(&random_protocol(4, 2, 2, 3).unwrap(), 1, true).unwrap(),
    ];
    for cp in &runs {
        let r = verify(cp).unwrap();
        let c = r.correlation.as_ref().expect("pure target");
        assert!(c.lhs <= c.eps + 3.0 * c.eps.sqrt() + 1e-9);
        assert!(check(&r, "correlation_bound") <= c.eps + 3.0 * c.eps.sqrt() + 1e-9);
    }
}

#[test]
fn junk_failure_loses_the_catalyst_at_most_with_failure_probability() {
    let p = product_protocol(&recurrence_protocol(0.85).unwrap(), 2).unwrap();
    let cp = convert_to_catalytic_with(&p, &mixed(4), &FailureModel::Junk(None)).unwrap();
    let r = verify(&cp).unwrap();
    let f = r.failure.as_ref().unwrap();
    assert_eq!(f.model, "junk");
    assert!(f.loss_probability <= f.failure_probability + 1e-12);
    assert!((f.failure_probability - (1.0 - r.success_probability)).abs() < 1e-9);
    assert!(f.catalyst_distance > 1e-3);
}

#[test]
fn registry_defaults_build_and_verify() {
    for key in ["identity", "recurrence", "random", "random_deterministic"] {
        let p = build_protocol(key, &BTreeMap::new()).unwrap();
        let cp = convert_to_catalytic(&p, &mixed(p.source_dim())).unwrap();
        let r = verify(&cp).unwrap();
        assert!(r.pass, "{key}: {:?}", r.failed_checks());
        assert!(trace_distance(&cp.target, &p.target).unwrap() < 1e-15);
    }
}

#[test]
fn eigensolver_survives_sparse_correlation_operator() {
    // This seed once produced NaN from the complex Hermitian eigensolver.
    let p = random_protocol(3, 1, 2, 5536974530653800022).unwrap();
    let cp = tradeoff_convert(&p, 1, true).unwrap();
    let run = cp.execute(&cp.joint_input(None).unwrap(), 0).unwrap();
    for b in run.final_state.branches() {
        let rest: Vec<usize> = (1..b.body.layout().len()).collect();
        let a = b.body.partial_trace_positions(&rest).unwrap();
        let diff = b.body.matrix() - &kron(cp.target.matrix(), a.matrix());
        let svd: f64 = singular_values(&diff).iter().sum();
        assert!((trace_norm(&diff).unwrap() - svd).abs() < 1e-10);
        let (vals, vecs) = eigh(&diff).unwrap();
        let back = spectral_map(&vals, &vecs, |x| x);
        assert!(back.max_abs_diff(&diff) < 1e-12);
    }
    let r = verify(&cp).unwrap();
    assert!(r.pass, "{:?}", r.failed_checks());
    assert!(r.correlation.unwrap().lhs.is_finite());
}
