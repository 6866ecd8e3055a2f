//! Diamond norm of a Hermiticity-preserving map from its Choi matrix:
//!
//! ```text
//! ‖Φ‖_⋄ = max ⟨J, W₁ − W₂⟩  s.t.  W₁, W₂ ⪰ 0,  W₁ + W₂ ⪯ ρ ⊗ I,  ρ ⪰ 0,  tr ρ = 1
//! ```
//!
//! Complex Hermitian blocks enter the real solver through
//! `H ↦ [[Re H, −Im H], [Im H, Re H]]`, under which `Re tr(HX) = ½⟨emb H, emb X⟩`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::sdp::{IterationRecord, SdpOptions, SdpProblem, SymSparse};
use crate::channels::QuantumOp;
use crate::error::{Error, Result};
use crate::tensor::{ComplexMatrix, C64};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiamondResult {
    /// ½‖Φ‖_⋄
    pub distance: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub log: Vec<IterationRecord>,
}

/// ½‖N − M‖_⋄
pub fn diamond_distance(n: &QuantumOp, m: &QuantumOp, tol: f64) -> Result<f64> {
    Ok(diamond_distance_report(n, m, tol)?.distance)
}

pub fn diamond_distance_report(n: &QuantumOp, m: &QuantumOp, tol: f64) -> Result<DiamondResult> {
    if n.din() != m.din() || n.dout() != m.dout() {
        return Err(Error::DimensionMismatch(format!(
            "diamond distance between {} -> {} and {} -> {}",
            n.input(),
            n.output(),
            m.input(),
            m.output()
        )));
    }
    let j = &n.choi()? - &m.choi()?;
    half_diamond_norm(&j, n.din(), n.dout(), tol)
}

/// ½‖Φ‖_⋄ for the map with Choi matrix `j` (input first).
pub fn half_diamond_norm(
    j: &ComplexMatrix,
    din: usize,
    dout: usize,
    tol: f64,
) -> Result<DiamondResult> {
    let n = din * dout;
    if j.rows() != n || !j.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Choi matrix of size {} for {din} -> {dout}",
            j.rows()
        )));
    }
    let defect = j.hermitian_defect();
    if defect > 1e-9 {
        return Err(Error::NotHermitian(defect));
    }
    let j = j.hermitian_part();
    if j.max_abs_diff(&ComplexMatrix::zeros(n, n)) == 0.0 {
        return Ok(DiamondResult {
            distance: 0.0,
            primal_objective: 0.0,
            dual_objective: 0.0,
            relative_gap: 0.0,
            iterations: 0,
            log: Vec::new(),
        });
    }
    // blocks: slack S, W₁, W₂ (all n), ρ (din)
    const S: usize = 0;
    const W1: usize = 1;
    const W2: usize = 2;
    const RHO: usize = 3;
    let block_sizes = vec![2 * n, 2 * n, 2 * n, 2 * din];
    let mut c: Vec<DMatrix<f64>> = block_sizes.iter().map(|&k| DMatrix::zeros(k, k)).collect();
    let jj: Vec<(usize, usize, C64)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| (a, b, j[(a, b)]))
        .collect();
    add_embedded_dense(&mut c[W1], n, &jj, -0.5);
    add_embedded_dense(&mut c[W2], n, &jj, 0.5);

    let mut a = Vec::with_capacity(n * n + 1);
    let mut b = Vec::with_capacity(n * n + 1);
    // S + W₁ + W₂ − ρ ⊗ I = 0, tested against a Hermitian basis
    for p in 0..n {
        for q in p..n {
            let kinds: &[C64] = if p == q {
                &[C64::new(1.0, 0.0)]
            } else {
                &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]
            };
            for &z in kinds {
                let h = [(p, q, z), (q, p, z.conj())];
                let h: &[(usize, usize, C64)] = if p == q { &h[..1] } else { &h };
                let mut sp = SymSparse::new();
                for blk in [S, W1, W2] {
                    add_embedded(&mut sp, blk, n, h, 0.5);
                }
                let (xp, yp) = (p / dout, p % dout);
                let (xq, yq) = (q / dout, q % dout);
                if yp == yq {
                    let t = [(xp, xq, z), (xq, xp, z.conj())];
                    let t: &[(usize, usize, C64)] = if p == q { &t[..1] } else { &t };
                    add_embedded(&mut sp, RHO, din, t, -0.5);
                }
                a.push(sp);
                b.push(0.0);
            }
        }
    }
    let mut tr = SymSparse::new();
    let id: Vec<(usize, usize, C64)> = (0..din).map(|i| (i, i, C64::new(1.0, 0.0))).collect();
    add_embedded(&mut tr, RHO, din, &id, 0.5);
    a.push(tr);
    b.push(1.0);

    let problem = SdpProblem {
        block_sizes,
        c,
        a,
        b,
    };
    let sol = problem.solve(&SdpOptions {
        tol,
        ..SdpOptions::default()
    })?;
    let norm = -0.5 * (sol.primal_objective + sol.dual_objective);
    Ok(DiamondResult {
        distance: 0.5 * norm.max(0.0),
        primal_objective: -sol.primal_objective,
        dual_objective: -sol.dual_objective,
        relative_gap: sol.relative_gap,
        iterations: sol.iterations,
        log: sol.log,
    })
}

/// Adds `scale · emb(H)` for H given entry-wise (both triangles listed).
fn add_embedded(sp: &mut SymSparse, block: usize, n: usize, h: &[(usize, usize, C64)], scale: f64) {
    for &(a, b, z) in h {
        sp.push(block, a, b, scale * z.re);
        sp.push(block, a + n, b + n, scale * z.re);
        sp.push(block, a + n, b, scale * z.im);
        sp.push(block, a, b + n, -scale * z.im);
    }
}

fn add_embedded_dense(m: &mut DMatrix<f64>, n: usize, h: &[(usize, usize, C64)], scale: f64) {
    for &(a, b, z) in h {
        m[(a, b)] += scale * z.re;
        m[(a + n, b + n)] += scale * z.re;
        m[(a + n, b)] += scale * z.im;
        m[(a, b + n)] -= scale * z.im;
    }
}
