//! Seeded random states, unitaries and channels.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channels::QuantumOp;
use crate::error::Result;
use crate::states::State;
use crate::tensor::{ComplexMatrix, SystemLayout, C64};

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-random isometry with `rows ≥ cols`.
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = ginibre(rows, cols, rng).to_nalgebra();
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column phases so the distribution is Haar
    let mut q: DMatrix<C64> = q;
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    ComplexMatrix::from_nalgebra(&q)
}

pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    random_isometry(d, d, rng)
}

pub fn random_pure<R: Rng + ?Sized>(layout: SystemLayout, rng: &mut R) -> Result<State> {
    let d = layout.total_dim();
    let g = ginibre(d, 1, rng);
    let norm = g.frobenius_norm();
    let v: Vec<C64> = g.data().iter().map(|z| z / norm).collect();
    State::pure(&v, layout)
}

/// Induced-measure mixed state G G† / tr with G of shape d × rank.
pub fn random_state<R: Rng + ?Sized>(
    layout: SystemLayout,
    rank: usize,
    rng: &mut R,
) -> Result<State> {
    let d = layout.total_dim();
    let g = ginibre(d, rank.max(1), rng);
    let m = g.matmul(&g.adjoint());
    let tr = m.trace().re;
    State::new(
        m.scaled(1.0 / tr).hermitian_part(),
        layout,
        crate::states::NormClass::Normalized,
    )
}

/// Kraus operators Kⱼ = (I ⊗ ⟨j|) V of a random Stinespring isometry.
pub fn random_kraus<R: Rng + ?Sized>(
    din: usize,
    dout: usize,
    count: usize,
    rng: &mut R,
) -> Vec<ComplexMatrix> {
    let v = random_isometry(dout * count, din, rng);
    (0..count)
        .map(|j| ComplexMatrix::from_fn(dout, din, |o, i| v[(o * count + j, i)]))
        .collect()
}

pub fn random_channel<R: Rng + ?Sized>(
    input: SystemLayout,
    output: SystemLayout,
    kraus_count: usize,
    rng: &mut R,
) -> Result<QuantumOp> {
    let ks = random_kraus(input.total_dim(), output.total_dim(), kraus_count, rng);
    QuantumOp::from_kraus(input, output, ks)
}

/// Random qubit channel on a single subsystem labeled `A`.
pub fn random_qubit_channel<R: Rng + ?Sized>(rng: &mut R) -> Result<QuantumOp> {
    let k = rng.gen_range(1..=4);
    random_channel(
        SystemLayout::single("A", 2),
        SystemLayout::single("A", 2),
        k,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(4, &mut rng);
        let id = u.adjoint().matmul(&u);
        assert!(id.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
    }

    #[test]
    fn channels_are_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            assert!(random_qubit_channel(&mut rng)
                .unwrap()
                .is_trace_preserving());
        }
    }

    #[test]
    fn same_seed_same_state() {
        let a = random_state(
            SystemLayout::single("A", 3),
            2,
            &mut ChaCha8Rng::seed_from_u64(7),
        )
        .unwrap();
        let b = random_state(
            SystemLayout::single("A", 3),
            2,
            &mut ChaCha8Rng::seed_from_u64(7),
        )
        .unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }
}
