//! Isotropic states and two-copy recurrence distillation.

use crate::catalysis::MultiShotProtocol;
use crate::channels::{kraus_product, QuantumOp};
use crate::error::{Error, Result};
use crate::states::{max_entangled_vector, State};
use crate::tensor::{ComplexMatrix, SystemLayout};

/// f·Φ_d + (1−f)(I − Φ_d)/(d² − 1) on one `d²`-dimensional subsystem.
pub fn isotropic_state(f: f64, d: usize) -> Result<State> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidArgument(format!(
            "isotropic fidelity {f} outside [0,1]"
        )));
    }
    if d < 2 {
        return Err(Error::InvalidArgument("isotropic states need d ≥ 2".into()));
    }
    let dd = d * d;
    let phi = ComplexMatrix::pure(&max_entangled_vector(d));
    let rest = &ComplexMatrix::identity(dd) - &phi;
    let mut m = phi.scaled(f);
    m.axpy((1.0 - f) / (dd - 1) as f64 * crate::tensor::ONE, &rest);
    State::new(
        m,
        SystemLayout::single("S", dd),
        crate::states::NormClass::Normalized,
    )
}

/// Bilateral CNOT on |a₁ b₁ a₂ b₂⟩ with the first pair as control.
pub fn bilateral_cnot() -> ComplexMatrix {
    let mut u = ComplexMatrix::zeros(16, 16);
    for idx in 0..16 {
        let (a1, b1, a2, b2) = (idx >> 3 & 1, idx >> 2 & 1, idx >> 1 & 1, idx & 1);
        let out = a1 << 3 | b1 << 2 | (a2 ^ a1) << 1 | (b2 ^ b1);
        u[(out, idx)] = crate::tensor::ONE;
    }
    u
}

/// (I₄ ⊗ ⟨x y|) U for the measured target pair.
fn measured(u: &ComplexMatrix, x: usize, y: usize) -> ComplexMatrix {
    let row = x << 1 | y;
    ComplexMatrix::from_fn(4, 16, |o, i| u[(o << 2 | row, i)])
}

/// Kraus operators of the agreeing and disagreeing measurement outcomes.
pub fn recurrence_kraus() -> (Vec<ComplexMatrix>, Vec<ComplexMatrix>) {
    let u = bilateral_cnot();
    let success = vec![measured(&u, 0, 0), measured(&u, 1, 1)];
    let failure = vec![measured(&u, 0, 1), measured(&u, 1, 0)];
    (success, failure)
}

fn pair_layouts() -> (SystemLayout, SystemLayout) {
    (
        SystemLayout::uniform("S", 4, 2),
        SystemLayout::uniform("S", 4, 1),
    )
}

/// Two isotropic pairs in, one pair out, kept when both targets agree.
pub fn recurrence_protocol(f: f64) -> Result<MultiShotProtocol> {
    if !(f > 0.5 && f <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "recurrence needs f ∈ (1/2, 1], got {f}"
        )));
    }
    let (input, output) = pair_layouts();
    let (ks, kf) = recurrence_kraus();
    let map = QuantumOp::from_kraus(input.clone(), output.clone(), ks)?;
    let fail = QuantumOp::from_kraus(input, output, kf)?;
    MultiShotProtocol::measured(
        format!("recurrence(f={f})"),
        map,
        Some(fail),
        2,
        1,
        isotropic_state(f, 2)?,
        isotropic_state(1.0, 2)?,
    )
}

/// Recurrence without post-selection: the first pair is kept on every outcome.
pub fn recurrence_deterministic(f: f64) -> Result<MultiShotProtocol> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidArgument(format!(
            "fidelity {f} outside [0,1]"
        )));
    }
    let (input, output) = pair_layouts();
    let (mut ks, kf) = recurrence_kraus();
    ks.extend(kf);
    let map = QuantumOp::from_kraus(input, output, ks)?;
    MultiShotProtocol::measured(
        format!("recurrence_deterministic(f={f})"),
        map,
        None,
        2,
        1,
        isotropic_state(f, 2)?,
        isotropic_state(1.0, 2)?,
    )
}

/// `copies` independent runs side by side: n·c → m·c.
pub fn product_protocol(p: &MultiShotProtocol, copies: usize) -> Result<MultiShotProtocol> {
    if copies == 0 {
        return Err(Error::InvalidArgument("copies must be at least 1".into()));
    }
    if copies == 1 {
        return Ok(p.clone());
    }
    let (n, m) = (p.n_in * copies, p.m_out * copies);
    let d = p.source_dim();
    crate::tensor::check_cap(d.checked_pow(n as u32).unwrap_or(usize::MAX))?;
    let input = SystemLayout::uniform("S", d, n);
    let output = SystemLayout::uniform("S", d, m);
    let map = QuantumOp::tensor_power(&p.map, copies).relabeled(input.clone(), output.clone())?;
    let failure = match &p.failure_map {
        None => None,
        Some(f) => {
            let (ks, kf) = (p.map.kraus()?, f.kraus()?);
            let mut all = Vec::new();
            // every success/failure pattern except all-success
            for pattern in 1..(1usize << copies) {
                let mut acc = vec![ComplexMatrix::identity(1)];
                for c in 0..copies {
                    let factor = if pattern >> (copies - 1 - c) & 1 == 1 {
                        &kf
                    } else {
                        &ks
                    };
                    acc = kraus_product(&acc, factor);
                }
                all.extend(acc);
            }
            Some(QuantumOp::from_kraus(input, output, all)?)
        }
    };
    MultiShotProtocol::measured(
        format!("{}^{copies}", p.name),
        map,
        failure,
        n,
        m,
        p.source.clone(),
        p.target.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::free_sets::{min_partial_transpose_eigenvalue, FreeSetOracle};

    #[test]
    fn isotropic_endpoints() {
        let phi = isotropic_state(1.0, 2).unwrap();
        assert!(phi.is_pure(1e-12));
        let flat = isotropic_state(0.25, 2).unwrap();
        let mixed = State::maximally_mixed(SystemLayout::single("S", 4)).unwrap();
        assert!(flat.matrix().max_abs_diff(mixed.matrix()) < 1e-15);
        assert!(isotropic_state(1.2, 2).is_err());
    }

    #[test]
    fn ppt_boundary_at_one_half() {
        let s = isotropic_state(0.5, 2).unwrap();
        assert!(
            min_partial_transpose_eigenvalue(s.matrix(), 2)
                .unwrap()
                .abs()
                < 1e-9
        );
        let ent = isotropic_state(0.9, 2).unwrap();
        assert!(!FreeSetOracle::EntanglementPpt { local_dim: 2 }
            .contains(&ent)
            .unwrap());
    }

    #[test]
    fn perfect_pairs_are_a_fixed_point() {
        let p = recurrence_protocol(1.0).unwrap();
        assert!((p.declared_p - 1.0).abs() < 1e-12);
        assert!(p.declared_eps < 1e-12);
    }

    #[test]
    fn bilateral_cnot_is_a_permutation() {
        let u = bilateral_cnot();
        let uu = u.adjoint().matmul(&u);
        assert!(uu.max_abs_diff(&ComplexMatrix::identity(16)) < 1e-15);
    }

    #[test]
    fn single_copy_product_is_unchanged() {
        let p = recurrence_protocol(0.8).unwrap();
        let q = product_protocol(&p, 1).unwrap();
        assert_eq!(q.n_in, 2);
        assert!(product_protocol(&p, 0).is_err());
    }
}
