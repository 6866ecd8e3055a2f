//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use catalyst_core::optim::mutual_info::mutual_information_at;
use catalyst_core::tensor::{sqrt_psd, trace_norm};
use catalyst_core::{ComplexMatrix, NormClass, QuantumOp, State, SystemLayout, C64};

/// Closed-form two-copy recurrence on isotropic pairs: (F′, p) with
/// x = (1−F)/3, p = (F + x)² + 4x², F′ = (F² + x²)/p.
pub fn recurrence_closed_form(f: f64) -> (f64, f64) {
    let x = (1.0 - f) / 3.0;
    let p = (f + x).powi(2) + 4.0 * x * x;
    ((f * f + x * x) / p, p)
}

/// ½(I + r·σ)
pub fn bloch_state(r: [f64; 3]) -> ComplexMatrix {
    let (x, y, z) = (r[0], r[1], r[2]);
    ComplexMatrix::from_vec(
        2,
        2,
        vec![
            C64::new(0.5 * (1.0 + z), 0.0),
            C64::new(0.5 * x, -0.5 * y),
            C64::new(0.5 * x, 0.5 * y),
            C64::new(0.5 * (1.0 - z), 0.0),
        ],
    )
    .unwrap()
}

/// Maximizes a concave function over the Bloch ball: a coarse grid
/// followed by a shrinking 27-point pattern search.
pub fn maximize_over_ball(mut g: impl FnMut([f64; 3]) -> f64) -> f64 {
    let inside = |r: [f64; 3]| r.iter().map(|v| v * v).sum::<f64>() <= 1.0;
    let mut best = ([0.0; 3], f64::NEG_INFINITY);
    let steps = 10;
    for i in -steps..=steps {
        for j in -steps..=steps {
            for k in -steps..=steps {
                let r = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    k as f64 / steps as f64,
                ];
                if inside(r) {
                    let v = g(r);
                    if v > best.1 {
                        best = (r, v);
                    }
                }
            }
        }
    }
    let mut h = 1.0 / steps as f64;
    while h > 1e-8 {
        let mut moved = false;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let c = best.0;
                    let mut r = [
                        c[0] + dx as f64 * h,
                        c[1] + dy as f64 * h,
                        c[2] + dz as f64 * h,
                    ];
                    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1.0 {
                        r.iter_mut().for_each(|v| *v /= norm);
                    }
                    let v = g(r);
                    if v > best.1 + 1e-15 {
                        best = (r, v);
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    best.1
}

/// ½‖N − M‖_⋄ for qubit channels: the purified input (√ρ ⊗ I)|Ω⟩ is
/// searched over the Bloch ball, where the objective is concave in ρ.
pub fn diamond_bloch_oracle(n: &QuantumOp, m: &QuantumOp) -> f64 {
    assert_eq!((n.din(), n.dout()), (2, 2));
    let j = &n.choi().unwrap() - &m.choi().unwrap();
    maximize_over_ball(|r| {
        let s = sqrt_psd(&bloch_state(r))
            .unwrap()
            .kron(&ComplexMatrix::identity(2));
        0.5 * trace_norm(&s.matmul(&j).matmul(&s)).unwrap()
    })
}

/// max_ρ I(ρ, N) for a qubit-input channel by search over the Bloch ball.
pub fn mutual_info_bloch_oracle(n: &QuantumOp) -> f64 {
    assert_eq!(n.din(), 2);
    let layout = n.input().clone();
    maximize_over_ball(|r| {
        let rho = State::new(bloch_state(r), layout.clone(), NormClass::Normalized).unwrap();
        mutual_information_at(n, &rho).unwrap()
    })
}

pub fn qubit() -> SystemLayout {
    SystemLayout::single("A", 2)
}
