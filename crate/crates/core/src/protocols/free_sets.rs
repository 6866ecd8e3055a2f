//! Free-set oracles: PPT for entanglement, stabilizer polytope for magic.

use std::collections::{HashSet, VecDeque};
use std::sync::OnceLock;

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::channels::{pauli_i, pauli_x, pauli_y, pauli_z};
use crate::error::{Error, Result};
use crate::states::State;
use crate::tensor::{eigvalsh, kron, kron_all, ComplexMatrix, C64};

/// Partial-transpose eigenvalues below this count as negative.
pub const PPT_TOL: f64 = 1e-10;
/// Slack allowed in the stabilizer-polytope LP.
pub const POLYTOPE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeSetOracle {
    /// Bipartite state on `local_dim × local_dim`.
    EntanglementPpt { local_dim: usize },
    /// One or two qubits.
    MagicStabilizer,
}

impl FreeSetOracle {
    pub fn contains(&self, s: &State) -> Result<bool> {
        match self {
            FreeSetOracle::EntanglementPpt { local_dim } => {
                Ok(min_partial_transpose_eigenvalue(s.matrix(), *local_dim)? >= -PPT_TOL)
            }
            FreeSetOracle::MagicStabilizer => Ok(stabilizer_polytope_slack(s)? <= POLYTOPE_TOL),
        }
    }
}

/// Transpose of the second factor of a `d·d` bipartite operator.
pub fn partial_transpose(m: &ComplexMatrix, local_dim: usize) -> Result<ComplexMatrix> {
    let d = local_dim;
    if m.rows() != d * d || m.cols() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} operator is not on {d}x{d}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(ComplexMatrix::from_fn(d * d, d * d, |r, c| {
        let (i, j) = (r / d, r % d);
        let (k, l) = (c / d, c % d);
        m[(i * d + l, k * d + j)]
    }))
}

pub fn min_partial_transpose_eigenvalue(m: &ComplexMatrix, local_dim: usize) -> Result<f64> {
    let pt = partial_transpose(m, local_dim)?;
    Ok(eigvalsh(&pt)?.first().copied().unwrap_or(0.0))
}

pub fn hadamard() -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real(2, 2, &[s, s, s, -s]).expect("2x2")
}

pub fn phase_gate() -> ComplexMatrix {
    let mut s = ComplexMatrix::identity(2);
    s[(1, 1)] = C64::new(0.0, 1.0);
    s
}

pub fn cnot() -> ComplexMatrix {
    ComplexMatrix::from_real(
        4,
        4,
        &[
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, 0.0,
        ],
    )
    .expect("4x4")
}

/// Phase-insensitive rounding key of an operator.
fn phase_key(m: &ComplexMatrix) -> Vec<i64> {
    let pivot = m
        .data()
        .iter()
        .copied()
        .find(|z| z.norm() > 1e-6)
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    m.data()
        .iter()
        .flat_map(|z| {
            let w = z * phase;
            [(w.re * 1e6).round() as i64, (w.im * 1e6).round() as i64]
        })
        .collect()
}

/// The 24 single-qubit Cliffords modulo phase, from BFS over {H, S}.
pub fn single_qubit_cliffords() -> &'static [ComplexMatrix] {
    static SET: OnceLock<Vec<ComplexMatrix>> = OnceLock::new();
    SET.get_or_init(|| {
        let gens = [hadamard(), phase_gate()];
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut queue = VecDeque::from([ComplexMatrix::identity(2)]);
        while let Some(u) = queue.pop_front() {
            if !seen.insert(phase_key(&u)) {
                continue;
            }
            for g in &gens {
                queue.push_back(g.matmul(&u));
            }
            out.push(u);
        }
        out
    })
}

/// Pure stabilizer states on `qubits ∈ {1, 2}`: 6 and 60 projectors.
pub fn stabilizer_states(qubits: usize) -> Result<&'static [ComplexMatrix]> {
    static ONE: OnceLock<Vec<ComplexMatrix>> = OnceLock::new();
    static TWO: OnceLock<Vec<ComplexMatrix>> = OnceLock::new();
    match qubits {
        1 => Ok(ONE.get_or_init(|| enumerate_stabilizer_states(1))),
        2 => Ok(TWO.get_or_init(|| enumerate_stabilizer_states(2))),
        _ => Err(Error::InvalidArgument(format!(
            "stabilizer oracle supports 1 or 2 qubits, got {qubits}"
        ))),
    }
}

fn enumerate_stabilizer_states(qubits: usize) -> Vec<ComplexMatrix> {
    let (h, s, i2) = (hadamard(), phase_gate(), ComplexMatrix::identity(2));
    let gens = if qubits == 1 {
        vec![h, s]
    } else {
        vec![
            kron(&h, &i2),
            kron(&i2, &h),
            kron(&s, &i2),
            kron(&i2, &s),
            cnot(),
        ]
    };
    let d = 1 << qubits;
    let mut start = vec![C64::new(0.0, 0.0); d];
    start[0] = C64::new(1.0, 0.0);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::from([ComplexMatrix::pure(&start)]);
    while let Some(p) = queue.pop_front() {
        if !seen.insert(phase_key(&p)) {
            continue;
        }
        for g in &gens {
            queue.push_back(g.sandwich(&p));
        }
        out.push(p);
    }
    out
}

/// Non-identity Pauli strings on `qubits`.
pub fn pauli_strings(qubits: usize) -> Vec<ComplexMatrix> {
    let single = [pauli_i(), pauli_x(), pauli_y(), pauli_z()];
    let count = 4usize.pow(qubits as u32);
    (1..count)
        .map(|mut idx| {
            let mut factors = Vec::with_capacity(qubits);
            for _ in 0..qubits {
                factors.push(&single[idx % 4]);
                idx /= 4;
            }
            factors.reverse();
            kron_all(factors)
        })
        .collect()
}

fn qubit_count(s: &State) -> Result<usize> {
    match s.dim() {
        2 => Ok(1),
        4 => Ok(2),
        d => Err(Error::InvalidArgument(format!(
            "stabilizer oracle supports 1 or 2 qubits, got dimension {d}"
        ))),
    }
}

/// Largest overlap ⟨s|ρ|s⟩ over pure stabilizer states.
pub fn max_stabilizer_overlap(s: &State) -> Result<f64> {
    let states = stabilizer_states(qubit_count(s)?)?;
    Ok(states
        .iter()
        .map(|p| p.inner(s.matrix()).re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Minimal ℓ₁ violation of the Pauli expectations of `s` by a convex
/// combination of stabilizer states; 0 iff `s` is in the polytope.
pub fn stabilizer_polytope_slack(s: &State) -> Result<f64> {
    let qubits = qubit_count(s)?;
    let states = stabilizer_states(qubits)?;
    let paulis = pauli_strings(qubits);
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let weights: Vec<_> = states
        .iter()
        .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    lp.add_constraint(weights.iter().map(|&w| (w, 1.0)), ComparisonOp::Eq, 1.0);
    for p in &paulis {
        let target = p.inner(s.matrix()).re;
        let up = lp.add_var(1.0, (0.0, f64::INFINITY));
        let down = lp.add_var(1.0, (0.0, f64::INFINITY));
        let mut expr: Vec<_> = states
            .iter()
            .zip(&weights)
            .map(|(st, &w)| (w, p.inner(st).re))
            .collect();
        expr.push((up, 1.0));
        expr.push((down, -1.0));
        lp.add_constraint(expr, ComparisonOp::Eq, target);
    }
    let outcome = lp.solve().map_err(|e| Error::NonConvergence {
        iterations: 0,
        detail: format!("stabilizer LP: {e}"),
    })?;
    let sol = outcome.solution().ok_or_else(|| Error::NonConvergence {
        iterations: 0,
        detail: "stabilizer LP interrupted".into(),
    })?;
    Ok(sol.objective().max(0.0))
}
