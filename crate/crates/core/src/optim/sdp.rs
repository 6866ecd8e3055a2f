//! Dense primal-dual interior-point solver for block-diagonal real
//! semidefinite programs
//!
//! ```text
//! primal:  min ⟨C, X⟩  s.t. ⟨Aᵢ, X⟩ = bᵢ,  X ⪰ 0
//! dual:    max bᵀy     s.t. Σ yᵢ Aᵢ + Z = C,  Z ⪰ 0
//! ```
//!
//! HKM search direction with a Mehrotra predictor-corrector step. Constraint
//! matrices are sparse and symmetric; `C`, `X` and `Z` are dense per block.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One nonzero of a symmetric constraint matrix. Off-diagonal entries are
/// listed twice, once per triangle.
#[derive(Clone, Copy, Debug)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SymSparse {
    entries: Vec<Entry>,
}

impl SymSparse {
    pub fn new() -> Self {
        SymSparse::default()
    }

    /// Adds `value` at (row, col) and (col, row).
    pub fn add(&mut self, block: usize, row: usize, col: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        self.push(block, row, col, value);
        if row != col {
            self.push(block, col, row, value);
        }
    }

    /// Adds a single entry; the caller keeps the matrix symmetric.
    pub fn push(&mut self, block: usize, row: usize, col: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        if let Some(e) = self
            .entries
            .iter_mut()
            .find(|e| e.block == block && e.row == row && e.col == col)
        {
            e.value += value;
        } else {
            self.entries.push(Entry {
                block,
                row,
                col,
                value,
            });
        }
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    fn dot(&self, x: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|e| e.value * x[e.block][(e.row, e.col)])
            .sum()
    }

    fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.value * e.value)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub c: Vec<DMatrix<f64>>,
    pub a: Vec<SymSparse>,
    pub b: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            tol: 1e-8,
            max_iterations: 100,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
}

/// (X, y, Z)
type Iterate = (Vec<DMatrix<f64>>, Vec<f64>, Vec<DMatrix<f64>>);

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    inner(a, a).sqrt()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

impl SdpProblem {
    fn validate(&self) -> Result<()> {
        if self.c.len() != self.block_sizes.len() {
            return Err(Error::DimensionMismatch(
                "cost blocks vs block sizes".into(),
            ));
        }
        for (c, &n) in self.c.iter().zip(&self.block_sizes) {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::DimensionMismatch("cost block shape".into()));
            }
        }
        if self.a.len() != self.b.len() {
            return Err(Error::DimensionMismatch(
                "constraint count vs rhs length".into(),
            ));
        }
        for a in &self.a {
            for e in a.entries() {
                if e.block >= self.block_sizes.len()
                    || e.row >= self.block_sizes[e.block]
                    || e.col >= self.block_sizes[e.block]
                {
                    return Err(Error::DimensionMismatch(
                        "constraint entry out of range".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// 𝒜(X)
    fn op(&self, x: &[DMatrix<f64>]) -> Vec<f64> {
        self.a.iter().map(|a| a.dot(x)).collect()
    }

    /// 𝒜*(y) = Σ yᵢ Aᵢ
    fn adj(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self
            .block_sizes
            .iter()
            .map(|&n| DMatrix::zeros(n, n))
            .collect();
        for (a, &yi) in self.a.iter().zip(y) {
            for e in a.entries() {
                out[e.block][(e.row, e.col)] += yi * e.value;
            }
        }
        out
    }

    /// Schur complement M_ij = tr(Aᵢ X Aⱼ Z⁻¹).
    fn schur(&self, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.a.len();
        let mut s = DMatrix::zeros(m, m);
        for i in 0..m {
            let ai = self.a[i].entries();
            for j in 0..=i {
                let mut acc = 0.0;
                for ei in ai {
                    for ej in self.a[j].entries() {
                        if ei.block != ej.block {
                            continue;
                        }
                        acc += ei.value
                            * ej.value
                            * x[ei.block][(ei.col, ej.row)]
                            * zinv[ei.block][(ej.col, ei.row)];
                    }
                }
                s[(i, j)] = acc;
                s[(j, i)] = acc;
            }
        }
        s
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<SdpSolution> {
        self.validate()?;
        let nblocks = self.block_sizes.len();
        let n_total: usize = self.block_sizes.iter().sum();
        let m = self.a.len();
        let b_norm = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c_norm = frob(&self.c);

        let a_max = self.a.iter().map(SymSparse::norm).fold(0.0, f64::max);
        let mut xi: f64 = 10f64.max((n_total as f64).sqrt());
        for (a, &bi) in self.a.iter().zip(&self.b) {
            xi = xi.max(n_total as f64 * (1.0 + bi.abs()) / (1.0 + a.norm()));
        }
        let eta = 10f64.max((n_total as f64).sqrt()).max(c_norm.max(a_max));
        let mut x: Vec<DMatrix<f64>> = self
            .block_sizes
            .iter()
            .map(|&n| DMatrix::identity(n, n) * xi)
            .collect();
        let mut z: Vec<DMatrix<f64>> = self
            .block_sizes
            .iter()
            .map(|&n| DMatrix::identity(n, n) * eta)
            .collect();
        let mut y = vec![0.0; m];
        let mut log = Vec::new();
        let mut best: Option<(f64, Iterate)> = None;

        for it in 0..=opts.max_iterations {
            let ax = self.op(&x);
            let rp: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let aty = self.adj(&y);
            let rd: Vec<DMatrix<f64>> =
                (0..nblocks).map(|k| &self.c[k] - &aty[k] - &z[k]).collect();
            let pobj = inner(&self.c, &x);
            let dobj: f64 = self.b.iter().zip(&y).map(|(b, y)| b * y).sum();
            let mu = inner(&x, &z) / n_total as f64;
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + b_norm);
            let dinf = frob(&rd) / (1.0 + c_norm);
            log.push(IterationRecord {
                iteration: it,
                primal_objective: pobj,
                dual_objective: dobj,
                relative_gap: gap,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                mu,
            });
            let worst = gap.max(pinf).max(dinf);
            if worst < opts.tol {
                return Ok(self.solution(x, y, z, log));
            }
            if best.as_ref().is_none_or(|b| worst < b.0) {
                best = Some((worst, (x.clone(), y.clone(), z.clone())));
            }
            if it == opts.max_iterations {
                break;
            }
            if let Err(e) = self.step(&mut x, &mut y, &mut z, &rp, &rd, mu) {
                return match best {
                    Some((worst, (x, y, z))) if worst < STALL_FACTOR * opts.tol => {
                        Ok(self.solution(x, y, z, log))
                    }
                    _ => Err(e),
                };
            }
        }
        if let Some((worst, (x, y, z))) = best {
            if worst < STALL_FACTOR * opts.tol {
                return Ok(self.solution(x, y, z, log));
            }
        }
        let last = log.last().expect("at least one iteration");
        Err(Error::NonConvergence {
            iterations: opts.max_iterations,
            detail: format!(
                "relative gap {:.3e}, primal residual {:.3e}, dual residual {:.3e}",
                last.relative_gap, last.primal_infeasibility, last.dual_infeasibility
            ),
        })
    }

    /// Packages an iterate with its own objectives and residuals.
    fn solution(
        &self,
        x: Vec<DMatrix<f64>>,
        y: Vec<f64>,
        z: Vec<DMatrix<f64>>,
        log: Vec<IterationRecord>,
    ) -> SdpSolution {
        let rp: Vec<f64> = self.b.iter().zip(self.op(&x)).map(|(b, a)| b - a).collect();
        let aty = self.adj(&y);
        let rd: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &self.c[k] - &aty[k] - &z[k]).collect();
        let pobj = inner(&self.c, &x);
        let dobj: f64 = self.b.iter().zip(&y).map(|(b, y)| b * y).sum();
        let b_norm = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        SdpSolution {
            primal_objective: pobj,
            dual_objective: dobj,
            relative_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            primal_infeasibility: rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + b_norm),
            dual_infeasibility: frob(&rd) / (1.0 + frob(&self.c)),
            iterations: log.len() - 1,
            x,
            y,
            z,
            log,
        }
    }

    /// One predictor-corrector update of (X, y, Z).
    fn step(
        &self,
        x: &mut [DMatrix<f64>],
        y: &mut [f64],
        z: &mut [DMatrix<f64>],
        rp: &[f64],
        rd: &[DMatrix<f64>],
        mu: f64,
    ) -> Result<()> {
        let nblocks = self.block_sizes.len();
        let n_total: usize = self.block_sizes.iter().sum();
        let m = self.a.len();
        let zinv: Vec<DMatrix<f64>> = z
            .iter()
            .map(|zb| {
                Cholesky::new(zb.clone())
                    .map(|c| c.inverse())
                    .ok_or_else(|| numerical("Z lost positive definiteness"))
            })
            .collect::<Result<_>>()?;
        let mut schur = self.schur(x, &zinv);
        let chol = factor(&mut schur)?;

        // X Rd Z⁻¹ is shared by predictor and corrector
        let xrdz: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &x[k] * &rd[k] * &zinv[k]).collect();
        let a_xrdz = self.op(&xrdz);

        let direction = |rc: &[DMatrix<f64>]| -> (Vec<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let a_rc = self.op(rc);
            let rhs: Vec<f64> = (0..m).map(|i| rp[i] - a_rc[i] + a_xrdz[i]).collect();
            let dy = chol.solve(&DVector::from_vec(rhs));
            let dy: Vec<f64> = dy.iter().copied().collect();
            let atdy = self.adj(&dy);
            let dz: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &rd[k] - &atdy[k]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nblocks)
                .map(|k| {
                    let mut d = &rc[k] - &x[k] * &dz[k] * &zinv[k];
                    symmetrize(&mut d);
                    d
                })
                .collect();
            (dy, dx, dz)
        };

        // predictor: aim at μ = 0
        let rc_aff: Vec<DMatrix<f64>> = x.iter().map(|xb| -xb).collect();
        let (_, dx_a, dz_a) = direction(&rc_aff);
        let ap = max_step(x, &dx_a)?.min(1.0);
        let ad = max_step(z, &dz_a)?.min(1.0);
        let x_a: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &x[k] + &dx_a[k] * ap).collect();
        let z_a: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &z[k] + &dz_a[k] * ad).collect();
        let mu_aff = inner(&x_a, &z_a) / n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rc: Vec<DMatrix<f64>> = (0..nblocks)
            .map(|k| &zinv[k] * (sigma * mu) - &x[k] - &dx_a[k] * &dz_a[k] * &zinv[k])
            .collect();
        let (dy, dx, dz) = direction(&rc);
        let tau = 0.98;
        let ap = (tau * max_step(x, &dx)?).min(1.0);
        let ad = (tau * max_step(z, &dz)?).min(1.0);
        for k in 0..nblocks {
            x[k] += &dx[k] * ap;
            z[k] += &dz[k] * ad;
            symmetrize(&mut x[k]);
            symmetrize(&mut z[k]);
        }
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += ad * d;
        }
        Ok(())
    }
}

/// Near the optimum the iterates can become too ill-conditioned to factor
/// before the residuals reach `tol`. The best iterate is accepted if every
/// residual is within this factor of `tol`; its residuals are reported as is.
const STALL_FACTOR: f64 = 10.0;

fn numerical(msg: &str) -> Error {
    Error::NonConvergence {
        iterations: 0,
        detail: msg.to_string(),
    }
}

/// Cholesky of the Schur complement with growing diagonal regularization.
fn factor(s: &mut DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    symmetrize(s);
    let scale = s
        .diagonal()
        .iter()
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut t = s.clone();
        for i in 0..t.nrows() {
            t[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(t) {
            return Ok(c);
        }
        reg = if reg == 0.0 {
            1e-14 * scale
        } else {
            reg * 100.0
        };
    }
    Err(numerical("Schur complement is not positive definite"))
}

/// Largest α with X + αΔX ⪰ 0 (∞ if unbounded).
fn max_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> Result<f64> {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        if xb.nrows() == 0 {
            continue;
        }
        let l = Cholesky::new(xb.clone())
            .ok_or_else(|| numerical("iterate lost positive definiteness"))?
            .unpack();
        let left = l
            .solve_lower_triangular(db)
            .ok_or_else(|| numerical("singular Cholesky factor"))?;
        let mut s = l
            .solve_lower_triangular(&left.transpose())
            .ok_or_else(|| numerical("singular Cholesky factor"))?;
        symmetrize(&mut s);
        let lmin = SymmetricEigen::new(s).eigenvalues.min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_eigenvalue_as_sdp() {
        // min ⟨C,X⟩ s.t. tr X = 1 gives λ_min(C)
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let mut tr = SymSparse::new();
        for i in 0..3 {
            tr.add(0, i, i, 1.0);
        }
        let p = SdpProblem {
            block_sizes: vec![3],
            c: vec![c.clone()],
            a: vec![tr],
            b: vec![1.0],
        };
        let sol = p.solve(&SdpOptions::default()).unwrap();
        let lmin = SymmetricEigen::new(c).eigenvalues.min();
        assert!((sol.primal_objective - lmin).abs() < 1e-7);
        assert!((sol.dual_objective - lmin).abs() < 1e-7);
    }

    #[test]
    fn linear_program_as_diagonal_blocks() {
        // min x1 + 2 x2 s.t. x1 + x2 = 1, x ≥ 0 → 1
        let mut a = SymSparse::new();
        a.add(0, 0, 0, 1.0);
        a.add(1, 0, 0, 1.0);
        let p = SdpProblem {
            block_sizes: vec![1, 1],
            c: vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 2.0),
            ],
            a: vec![a],
            b: vec![1.0],
        };
        let sol = p.solve(&SdpOptions::default()).unwrap();
        assert!((sol.primal_objective - 1.0).abs() < 1e-7);
        assert!(sol.x[1][(0, 0)] < 1e-6);
    }

    #[test]
    fn off_diagonal_constraint() {
        // max 2 X01 s.t. X00 = X11 = 1 → 2 (min of the negative)
        let mut a0 = SymSparse::new();
        a0.add(0, 0, 0, 1.0);
        let mut a1 = SymSparse::new();
        a1.add(0, 1, 1, 1.0);
        let c = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        let p = SdpProblem {
            block_sizes: vec![2],
            c: vec![c],
            a: vec![a0, a1],
            b: vec![1.0, 1.0],
        };
        let sol = p.solve(&SdpOptions::default()).unwrap();
        assert!((sol.primal_objective + 2.0).abs() < 1e-7);
        assert!(sol.log.len() > 1);
    }

    #[test]
    fn iteration_cap_reports_residuals() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let mut tr = SymSparse::new();
        tr.add(0, 0, 0, 1.0);
        tr.add(0, 1, 1, 1.0);
        let p = SdpProblem {
            block_sizes: vec![2],
            c: vec![c],
            a: vec![tr],
            b: vec![1.0],
        };
        let err = p
            .solve(&SdpOptions {
                tol: 1e-8,
                max_iterations: 1,
            })
            .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }
}
