//! Channel mutual information I(N) = max_ρ S(ρ) + S(N(ρ)) − S(Nᶜ(ρ)), in bits.
//!
//! The objective is concave in the input marginal ρ; it is maximized by
//! projected gradient ascent on the set of density operators with Armijo
//! step halving. The reported gap is the Frank-Wolfe gap
//! `λ_max(G) − ⟨G, ρ⟩`, an upper bound on the distance to the optimum.

use crate::channels::QuantumOp;
use crate::error::{Error, Result};
use crate::states::State;
use crate::tensor::{self, binary_entropy, ComplexMatrix, C64};

/// Eigenvalue floor inside the matrix logarithms of the gradient.
const LOG_FLOOR: f64 = 1e-15;
const MAX_ITERATIONS: usize = 20_000;

#[derive(Clone, Debug)]
pub struct MutualInfoResult {
    pub value: f64,
    pub optimizer_state: State,
    pub iterations: usize,
    pub gap_estimate: f64,
}

struct Objective {
    kraus: Vec<ComplexMatrix>,
    env: Vec<ComplexMatrix>,
    din: usize,
}

fn log2_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (vals, vecs) = tensor::eigh(&m.hermitian_part())?;
    Ok(tensor::spectral_map(&vals, &vecs, |x| {
        x.max(LOG_FLOOR).log2()
    }))
}

fn entropy(m: &ComplexMatrix) -> Result<f64> {
    let vals = tensor::eigvalsh(&m.hermitian_part())?;
    Ok(vals
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum())
}

fn apply_kraus(ks: &[ComplexMatrix], rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(ks[0].rows(), ks[0].rows());
    for k in ks {
        out += &k.sandwich(rho);
    }
    out
}

fn adjoint_kraus(ks: &[ComplexMatrix], y: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(ks[0].cols(), ks[0].cols());
    for k in ks {
        out += &k.adjoint().matmul(y).matmul(k);
    }
    out
}

impl Objective {
    fn new(n: &QuantumOp) -> Result<Self> {
        if !n.is_trace_preserving() {
            return Err(Error::InvalidArgument(
                "mutual information needs a trace-preserving channel".into(),
            ));
        }
        let kraus = n.kraus()?;
        let env = n.complementary()?.kraus()?;
        Ok(Objective {
            kraus,
            env,
            din: n.din(),
        })
    }

    fn value(&self, rho: &ComplexMatrix) -> Result<f64> {
        let out = apply_kraus(&self.kraus, rho);
        let env = apply_kraus(&self.env, rho);
        Ok(entropy(rho)? + entropy(&out)? - entropy(&env)?)
    }

    fn gradient(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let out = apply_kraus(&self.kraus, rho);
        let env = apply_kraus(&self.env, rho);
        let mut g = -&log2_psd(rho)?;
        g = &g - &adjoint_kraus(&self.kraus, &log2_psd(&out)?);
        g += &adjoint_kraus(&self.env, &log2_psd(&env)?);
        Ok(g.hermitian_part())
    }
}

/// Euclidean projection of a Hermitian matrix onto {ρ ⪰ 0, tr ρ = 1}.
pub fn project_to_density(y: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (vals, vecs) = tensor::eigh(&y.hermitian_part())?;
    let p = project_to_simplex(&vals);
    Ok(tensor::spectral_map(&p, &vecs, |x| x))
}

fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn frobenius_gap(g: &ComplexMatrix, rho: &ComplexMatrix) -> Result<f64> {
    let top = tensor::eigvalsh(g)?.last().copied().unwrap_or(0.0);
    Ok((top - g.inner(rho).re).max(0.0))
}

/// I(ρ, N) = S(ρ) + S(N(ρ)) − S(Nᶜ(ρ)) for a given input marginal.
pub fn mutual_information_at(n: &QuantumOp, rho: &State) -> Result<f64> {
    let obj = Objective::new(n)?;
    if rho.dim() != obj.din {
        return Err(Error::DimensionMismatch("input state dimension".into()));
    }
    obj.value(rho.matrix())
}

pub fn channel_mutual_information(n: &QuantumOp, tol: f64) -> Result<MutualInfoResult> {
    let obj = Objective::new(n)?;
    let d = obj.din;
    let mut rho = ComplexMatrix::identity(d).scaled(1.0 / d as f64);
    let mut f = obj.value(&rho)?;
    let mut step = 1.0;
    for it in 0..MAX_ITERATIONS {
        let g = obj.gradient(&rho)?;
        let gap = frobenius_gap(&g, &rho)?;
        if gap <= tol {
            return finish(n, f, rho, it, gap);
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = rho.clone();
            trial.axpy(C64::new(step, 0.0), &g);
            let cand = project_to_density(&trial)?;
            let dir = &cand - &rho;
            let ascent = g.inner(&dir).re;
            if dir.frobenius_norm() < 1e-15 {
                break;
            }
            let fc = obj.value(&cand)?;
            if fc >= f + 1e-4 * ascent {
                rho = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no representable ascent left: stationary to machine precision
            return finish(n, f, rho, it, gap);
        }
        step = (step * 2.0).min(1e3);
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        detail: format!("mutual information ascent stalled at {f}"),
    })
}

fn finish(
    n: &QuantumOp,
    value: f64,
    rho: ComplexMatrix,
    iterations: usize,
    gap: f64,
) -> Result<MutualInfoResult> {
    let dmin = n.din().min(n.dout()) as f64;
    if value > 2.0 * dmin.log2() + 1e-9 || value < -1e-9 {
        return Err(Error::invariant(
            "mutual_information_range",
            format!("value {value} outside [0, 2 log2 {dmin}]"),
        ));
    }
    let state = State::new(rho, n.input().clone(), crate::states::NormClass::Normalized)?;
    Ok(MutualInfoResult {
        value: value.max(0.0),
        optimizer_state: state,
        iterations,
        gap_estimate: gap,
    })
}

/// f(ε) = 3ε log₂ d_AB + 3 h₂(ε)
pub fn continuity_bound(eps: f64, d_ab: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside [0,1]")));
    }
    if d_ab == 0 {
        return Err(Error::InvalidArgument("d_ab must be positive".into()));
    }
    Ok(3.0 * eps * (d_ab as f64).log2() + 3.0 * binary_entropy(eps))
}
