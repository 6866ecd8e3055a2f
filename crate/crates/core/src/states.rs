//! Density operators, classically flagged ensembles and the two embeddings
//! used to align source and target systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    self, check_cap, cyclic_forward, kron, trace_norm, ComplexMatrix, SystemLayout, C64, ONE,
    PSD_TOL, ZERO,
};

/// Trace tolerance for normalized and subnormalized states.
pub const TRACE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormClass {
    Normalized,
    Subnormalized,
}

/// A (possibly subnormalized) density operator over a [`SystemLayout`].
#[derive(Clone, Debug)]
pub struct State {
    matrix: ComplexMatrix,
    layout: SystemLayout,
    norm_class: NormClass,
}

impl State {
    /// Validating constructor: Hermitian (small asymmetry is symmetrized),
    /// PSD and trace-bounded per `norm_class`.
    pub fn new(matrix: ComplexMatrix, layout: SystemLayout, norm_class: NormClass) -> Result<Self> {
        let d = matrix.dim()?;
        if d != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{d}-dimensional matrix for layout {layout}"
            )));
        }
        check_cap(d)?;
        let defect = matrix.hermitian_defect();
        if defect > tensor::HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        let matrix = matrix.hermitian_part();
        let vals = tensor::eigvalsh(&matrix)?;
        if let Some(&min) = vals.first() {
            if min < -PSD_TOL {
                return Err(Error::NotPsd(min));
            }
        }
        let tr = matrix.trace().re;
        match norm_class {
            NormClass::Normalized if (tr - 1.0).abs() > TRACE_TOL => {
                return Err(Error::InvalidArgument(format!(
                    "normalized state has trace {tr}"
                )))
            }
            NormClass::Subnormalized if !(-TRACE_TOL..=1.0 + TRACE_TOL).contains(&tr) => {
                return Err(Error::InvalidArgument(format!(
                    "subnormalized state has trace {tr}"
                )))
            }
            _ => {}
        }
        Ok(State {
            matrix,
            layout,
            norm_class,
        })
    }

    /// Constructor for results of operations already known to preserve the
    /// invariants. Only shapes and the dense cap are checked.
    pub(crate) fn from_parts(matrix: ComplexMatrix, layout: SystemLayout) -> Result<Self> {
        let d = matrix.dim()?;
        if d != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{d}-dimensional matrix for layout {layout}"
            )));
        }
        check_cap(d)?;
        let tr = matrix.trace().re;
        let norm_class = if (tr - 1.0).abs() <= TRACE_TOL {
            NormClass::Normalized
        } else {
            NormClass::Subnormalized
        };
        Ok(State {
            matrix,
            layout,
            norm_class,
        })
    }

    pub fn pure(vector: &[C64], layout: SystemLayout) -> Result<Self> {
        State::from_parts(ComplexMatrix::pure(vector), layout)
    }

    pub fn basis(index: usize, layout: SystemLayout) -> Result<Self> {
        let d = layout.total_dim();
        if index >= d {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} >= {d}"
            )));
        }
        State::from_parts(ComplexMatrix::unit(d, index, index), layout)
    }

    pub fn maximally_mixed(layout: SystemLayout) -> Result<Self> {
        let d = layout.total_dim();
        State::from_parts(ComplexMatrix::identity(d).scaled(1.0 / d as f64), layout)
    }

    /// The 1x1 unit state on the empty layout.
    pub fn trivial() -> Self {
        State {
            matrix: ComplexMatrix::identity(1),
            layout: SystemLayout::empty(),
            norm_class: NormClass::Normalized,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn norm_class(&self) -> NormClass {
        self.norm_class
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Same matrix, new layout with identical total dimension.
    pub fn with_layout(&self, layout: SystemLayout) -> Result<State> {
        if layout.total_dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot relabel {} as {layout}",
                self.layout
            )));
        }
        Ok(State {
            matrix: self.matrix.clone(),
            layout,
            norm_class: self.norm_class,
        })
    }

    pub fn relabeled(&self, prefix: &str) -> State {
        State {
            matrix: self.matrix.clone(),
            layout: self.layout.relabeled(prefix),
            norm_class: self.norm_class,
        }
    }

    pub fn tensor(&self, other: &State) -> Result<State> {
        check_cap(self.dim() * other.dim())?;
        State::from_parts(
            kron(&self.matrix, &other.matrix),
            self.layout.tensor(&other.layout),
        )
    }

    pub fn tensor_power(&self, copies: usize) -> Result<State> {
        let mut out = State::trivial();
        for _ in 0..copies {
            out = out.tensor(self)?;
        }
        Ok(out)
    }

    pub fn partial_trace<S: AsRef<str>>(&self, keep: &[S]) -> Result<State> {
        let pos = self.layout.positions(keep)?;
        self.partial_trace_positions(&pos)
    }

    /// Marginal on the given positions (returned in layout order).
    pub fn partial_trace_positions(&self, keep: &[usize]) -> Result<State> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let m = tensor::partial_trace_positions(&self.matrix, &self.layout.dims(), &keep)?;
        State::from_parts(m, self.layout.select(&keep))
    }

    /// New position `j` holds old subsystem `perm[j]`.
    pub fn permute(&self, perm: &[usize]) -> Result<State> {
        let (m, l) = tensor::permute_subsystems(&self.matrix, &self.layout, perm)?;
        State::from_parts(m, l)
    }

    pub fn scaled(&self, factor: f64) -> Result<State> {
        State::from_parts(self.matrix.scaled(factor), self.layout.clone())
    }

    pub fn normalized(&self) -> Result<State> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero state".into(),
            ));
        }
        self.scaled(1.0 / tr)
    }

    /// tr ρ² ≥ 1 - tol for normalized ρ.
    pub fn is_pure(&self, tol: f64) -> bool {
        let tr = self.trace();
        let purity = self.matrix.inner(&self.matrix).re;
        (purity - tr * tr).abs() <= tol && (tr - 1.0).abs() <= tol
    }

    pub fn to_file(&self) -> StateFile {
        StateFile {
            layout: self.layout.clone(),
            norm_class: self.norm_class,
            entries: self.matrix.data().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_file(file: StateFile) -> Result<State> {
        let d = file.layout.total_dim();
        let data = file
            .entries
            .iter()
            .map(|&[re, im]| C64::new(re, im))
            .collect();
        let m = ComplexMatrix::from_vec(d, d, data)?;
        let defect = m.hermitian_defect();
        if defect > tensor::HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        // Keep the stored entries bit-for-bit; the validating constructor
        // would symmetrize them.
        State::new(m.clone(), file.layout.clone(), file.norm_class)?;
        Ok(State {
            matrix: m,
            layout: file.layout,
            norm_class: file.norm_class,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<State> {
        State::from_file(serde_json::from_str(s)?)
    }
}

/// On-disk state format shared by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateFile {
    pub layout: SystemLayout,
    pub norm_class: NormClass,
    pub entries: Vec<[f64; 2]>,
}

/// Δ(a,b) = ½‖a − b‖₁.
pub fn trace_distance(a: &State, b: &State) -> Result<f64> {
    matrix_trace_distance(a.matrix(), b.matrix())
}

pub fn matrix_trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.dim()? != b.dim()? {
        return Err(Error::DimensionMismatch(format!(
            "trace distance between {} and {} dimensional states",
            a.rows(),
            b.rows()
        )));
    }
    Ok(0.5 * trace_norm(&(a - b))?)
}

/// How a smaller state is placed into a larger space.
#[derive(Clone, Debug)]
pub enum EmbeddingSpec {
    /// (·) ⊗ π^{⊗copies} with a normalized free state π.
    AppendFree { free_state: State },
    /// Block embedding into a direct sum with `extra_dim` orthogonal dimensions.
    OrthogonalDirectSum { extra_dim: usize },
}

impl EmbeddingSpec {
    pub fn append(free_state: State) -> Result<Self> {
        if free_state.norm_class() != NormClass::Normalized {
            return Err(Error::InvalidArgument(
                "append embedding needs a normalized free state".into(),
            ));
        }
        Ok(EmbeddingSpec::AppendFree { free_state })
    }

    pub fn direct_sum(extra_dim: usize) -> Result<Self> {
        if extra_dim == 0 {
            return Err(Error::InvalidArgument(
                "extra_dim must be at least 1".into(),
            ));
        }
        Ok(EmbeddingSpec::OrthogonalDirectSum { extra_dim })
    }
}

/// s ⊗ π^{⊗copies}
pub fn embed_append(s: &State, spec: &EmbeddingSpec, copies: usize) -> Result<State> {
    let EmbeddingSpec::AppendFree { free_state } = spec else {
        return Err(Error::InvalidArgument(
            "embed_append needs an append_free embedding".into(),
        ));
    };
    s.tensor(&free_state.tensor_power(copies)?)
}

/// Places `s` in the top-left block of a `dim(s) + extra_dim` space, as a
/// single subsystem labeled `T`.
pub fn embed_orthogonal(s: &State, spec: &EmbeddingSpec) -> Result<State> {
    let EmbeddingSpec::OrthogonalDirectSum { extra_dim } = spec else {
        return Err(Error::InvalidArgument(
            "embed_orthogonal needs an orthogonal_direct_sum embedding".into(),
        ));
    };
    let d = s.dim();
    let mut m = ComplexMatrix::zeros(d + extra_dim, d + extra_dim);
    m.set_block(0, 0, s.matrix());
    State::from_parts(m, SystemLayout::single("T", d + extra_dim))
}

/// The free state on the orthogonal complement W (maximally mixed on W),
/// embedded in the `base_dim + extra_dim` space.
pub fn orthogonal_free_state(base_dim: usize, extra_dim: usize) -> Result<State> {
    let mut m = ComplexMatrix::zeros(base_dim + extra_dim, base_dim + extra_dim);
    for i in 0..extra_dim {
        m[(base_dim + i, base_dim + i)] = C64::new(1.0 / extra_dim as f64, 0.0);
    }
    State::from_parts(m, SystemLayout::single("T", base_dim + extra_dim))
}

/// Projector onto the original block of a direct-sum embedding.
pub fn base_block_projector(base_dim: usize, extra_dim: usize) -> ComplexMatrix {
    let mut p = ComplexMatrix::zeros(base_dim + extra_dim, base_dim + extra_dim);
    for i in 0..base_dim {
        p[(i, i)] = ONE;
    }
    p
}

/// Isometry base → base ⊕ extra.
pub fn direct_sum_isometry(base_dim: usize, extra_dim: usize) -> ComplexMatrix {
    let mut v = ComplexMatrix::zeros(base_dim + extra_dim, base_dim);
    for i in 0..base_dim {
        v[(i, i)] = ONE;
    }
    v
}

/// Undo an append embedding by tracing out everything but `keep`.
pub fn reverse_embed<S: AsRef<str>>(s: &State, keep: &[S]) -> Result<State> {
    s.partial_trace(keep)
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub weight: f64,
    pub body: State,
    pub label: usize,
}

/// Σᵢ wᵢ ρᵢ ⊗ |i⟩⟨i| kept branch-wise.
#[derive(Clone, Debug)]
pub struct FlaggedEnsemble {
    branches: Vec<Branch>,
}

impl FlaggedEnsemble {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        let mut total = 0.0;
        for (i, b) in branches.iter().enumerate() {
            if !(-TRACE_TOL..=1.0 + TRACE_TOL).contains(&b.weight) {
                return Err(Error::InvalidArgument(format!(
                    "branch weight {} out of [0,1]",
                    b.weight
                )));
            }
            total += b.weight;
            if branches[..i].iter().any(|o| o.label == b.label) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate branch label {}",
                    b.label
                )));
            }
            if b.body.dim() != branches[0].body.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "branch {} has dimension {}, expected {}",
                    b.label,
                    b.body.dim(),
                    branches[0].body.dim()
                )));
            }
        }
        if total > 1.0 + TRACE_TOL {
            return Err(Error::InvalidArgument(format!(
                "branch weights sum to {total}"
            )));
        }
        let mut branches = branches;
        branches.sort_by_key(|b| b.label);
        Ok(FlaggedEnsemble { branches })
    }

    /// Uniform weights 1/len with labels 1..=len.
    pub fn uniform(bodies: Vec<State>) -> Result<Self> {
        let w = 1.0 / bodies.len() as f64;
        FlaggedEnsemble::new(
            bodies
                .into_iter()
                .enumerate()
                .map(|(i, body)| Branch {
                    weight: w,
                    body,
                    label: i + 1,
                })
                .collect(),
        )
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn into_branches(self) -> Vec<Branch> {
        self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn branch(&self, label: usize) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    /// Σ wᵢ tr ρᵢ
    pub fn total_weight(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * b.body.trace())
            .sum()
    }

    pub fn body_dim(&self) -> usize {
        self.branches.first().map_or(1, |b| b.body.dim())
    }

    pub fn register_dim(&self) -> usize {
        self.branches.iter().map(|b| b.label).max().unwrap_or(0)
    }

    /// Apply `f` to every body, keeping weights and labels.
    pub fn map_bodies(&self, mut f: impl FnMut(&Branch) -> Result<State>) -> Result<Self> {
        let branches = self
            .branches
            .iter()
            .map(|b| {
                Ok(Branch {
                    weight: b.weight,
                    body: f(b)?,
                    label: b.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FlaggedEnsemble::new(branches)
    }

    /// Branch-wise marginal on body positions `keep`.
    pub fn marginal(&self, keep: &[usize]) -> Result<Self> {
        self.map_bodies(|b| b.body.partial_trace_positions(keep))
    }

    /// Σ wᵢ ρᵢ (classical register discarded).
    pub fn average(&self) -> Result<State> {
        let d = self.body_dim();
        let mut m = ComplexMatrix::zeros(d, d);
        for b in &self.branches {
            m.axpy(C64::new(b.weight, 0.0), b.body.matrix());
        }
        let layout = self
            .branches
            .first()
            .map(|b| b.body.layout().clone())
            .unwrap_or_default();
        State::from_parts(m, layout)
    }

    /// Block-diagonal Σᵢ wᵢ ρᵢ ⊗ |i⟩⟨i|, label i occupying register index i-1.
    pub fn materialize(&self) -> Result<State> {
        let d = self.body_dim();
        let r = self.register_dim();
        check_cap(d * r)?;
        let mut m = ComplexMatrix::zeros(d * r, d * r);
        for b in &self.branches {
            let i = b.label - 1;
            for p in 0..d {
                for q in 0..d {
                    m[(p * r + i, q * r + i)] = b.body.matrix()[(p, q)] * b.weight;
                }
            }
        }
        let same_layout = self
            .branches
            .iter()
            .all(|b| b.body.layout() == self.branches[0].body.layout());
        let body_layout = if same_layout && !self.branches.is_empty() {
            self.branches[0].body.layout().clone()
        } else {
            SystemLayout::single("Q", d)
        };
        let layout = body_layout.tensor(&SystemLayout::single("F", r));
        State::from_parts(m, layout)
    }

    /// Inverse of [`materialize`](Self::materialize) for the given labels.
    pub fn from_materialized(
        state: &State,
        labels: &[usize],
        body_layout: &SystemLayout,
    ) -> Result<Self> {
        let r = labels.iter().copied().max().unwrap_or(0);
        let d = body_layout.total_dim();
        if d * r != state.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}-dimensional state is not {d} x {r}",
                state.dim()
            )));
        }
        let mut branches = Vec::new();
        for &label in labels {
            let i = label - 1;
            let block = ComplexMatrix::from_fn(d, d, |p, q| state.matrix()[(p * r + i, q * r + i)]);
            let weight = block.trace().re;
            let body = if weight > 0.0 {
                block.scaled(1.0 / weight)
            } else {
                ComplexMatrix::zeros(d, d)
            };
            branches.push(Branch {
                weight,
                body: State::from_parts(body, body_layout.clone())?,
                label,
            });
        }
        FlaggedEnsemble::new(branches)
    }

    fn check_labels_are_range(&self) -> Result<usize> {
        let m = self.branches.len();
        for (i, b) in self.branches.iter().enumerate() {
            if b.label != i + 1 {
                return Err(Error::InvalidArgument(format!(
                    "labels must be exactly 1..={m}"
                )));
            }
        }
        Ok(m)
    }
}

/// Relabel i → i+1 and m → 1; bodies and weights untouched.
pub fn cyclic_shift_labels(e: &FlaggedEnsemble) -> Result<FlaggedEnsemble> {
    let m = e.check_labels_are_range()?;
    FlaggedEnsemble::new(
        e.branches
            .iter()
            .map(|b| Branch {
                weight: b.weight,
                body: b.body.clone(),
                label: b.label % m + 1,
            })
            .collect(),
    )
}

/// Grouping of a body's subsystems into `slots` consecutive groups of equal
/// dimension.
pub fn slot_groups(layout: &SystemLayout, slots: usize) -> Result<Vec<Vec<usize>>> {
    if slots == 0 {
        return Err(Error::InvalidArgument("slot count must be positive".into()));
    }
    let total = layout.total_dim();
    let slot_dim = (total as f64).powf(1.0 / slots as f64).round() as usize;
    if slot_dim.checked_pow(slots as u32) != Some(total) {
        return Err(Error::InvalidArgument(format!(
            "layout {layout} does not split into {slots} equal slots"
        )));
    }
    let dims = layout.dims();
    let mut groups = Vec::with_capacity(slots);
    let mut pos = 0;
    for _ in 0..slots {
        let mut g = Vec::new();
        let mut acc = 1usize;
        while acc < slot_dim {
            let Some(&d) = dims.get(pos) else {
                return Err(Error::InvalidArgument(format!(
                    "layout {layout} does not split into {slots} equal slots"
                )));
            };
            acc *= d;
            g.push(pos);
            pos += 1;
        }
        if acc != slot_dim {
            return Err(Error::InvalidArgument(format!(
                "layout {layout} does not split into {slots} equal slots"
            )));
        }
        groups.push(g);
    }
    // unit-dimension trailing subsystems ride along with the last slot
    while pos < dims.len() && dims[pos] == 1 {
        groups.last_mut().expect("slots > 0").push(pos);
        pos += 1;
    }
    if pos != dims.len() {
        return Err(Error::InvalidArgument(format!(
            "layout {layout} does not split into {slots} equal slots"
        )));
    }
    Ok(groups)
}

/// Subsystem permutation moving the last slot to the front.
pub fn cyclic_slot_permutation(layout: &SystemLayout, slots: usize) -> Result<Vec<usize>> {
    let groups = slot_groups(layout, slots)?;
    Ok(cyclic_forward(slots)
        .into_iter()
        .flat_map(|g| groups[g].clone())
        .collect())
}

/// Conjugate each body by the cyclic slot permutation (slot i → i+1, last → first).
pub fn cyclic_shift_quantum(e: &FlaggedEnsemble, slots: usize) -> Result<FlaggedEnsemble> {
    e.map_bodies(|b| {
        if slots == 1 {
            return Ok(b.body.clone());
        }
        let perm = cyclic_slot_permutation(b.body.layout(), slots)?;
        b.body.permute(&perm)
    })
}

/// Trace distance between two flagged ensembles, treating them as
/// block-diagonal operators over a shared label register.
pub fn flagged_trace_distance(a: &FlaggedEnsemble, b: &FlaggedEnsemble) -> Result<f64> {
    let mut labels: Vec<usize> = a
        .branches
        .iter()
        .chain(&b.branches)
        .map(|x| x.label)
        .collect();
    labels.sort_unstable();
    labels.dedup();
    let mut total = 0.0;
    for l in labels {
        let wa = a.branch(l).map(|x| x.body.matrix().scaled(x.weight));
        let wb = b.branch(l).map(|x| x.body.matrix().scaled(x.weight));
        total += match (wa, wb) {
            (Some(x), Some(y)) => {
                if x.rows() != y.rows() {
                    return Err(Error::DimensionMismatch(format!(
                        "branch {l} dimensions {} and {}",
                        x.rows(),
                        y.rows()
                    )));
                }
                0.5 * trace_norm(&(&x - &y))?
            }
            (Some(x), None) | (None, Some(x)) => 0.5 * trace_norm(&x)?,
            (None, None) => 0.0,
        };
    }
    Ok(total)
}

/// |Φ⟩ = Σ|ii⟩/√d
pub fn max_entangled_vector(d: usize) -> Vec<C64> {
    let mut v = vec![ZERO; d * d];
    let s = 1.0 / (d as f64).sqrt();
    for i in 0..d {
        v[i * d + i] = C64::new(s, 0.0);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit(label: &str) -> SystemLayout {
        SystemLayout::single(label, 2)
    }

    fn zero() -> State {
        State::basis(0, qubit("S")).unwrap()
    }

    fn one() -> State {
        State::basis(1, qubit("S")).unwrap()
    }

    fn mixed() -> State {
        State::maximally_mixed(qubit("S")).unwrap()
    }

    #[test]
    fn trace_distance_examples() {
        assert!(trace_distance(&zero(), &zero()).unwrap().abs() < 1e-15);
        assert!((trace_distance(&zero(), &one()).unwrap() - 1.0).abs() < 1e-14);
        assert!((trace_distance(&zero(), &mixed()).unwrap() - 0.5).abs() < 1e-14);
        let big = State::maximally_mixed(SystemLayout::single("X", 3)).unwrap();
        assert!(matches!(
            trace_distance(&zero(), &big),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn validating_constructor_rejects_bad_input() {
        let not_psd = ComplexMatrix::diag_real(&[1.5, -0.5]);
        assert!(matches!(
            State::new(not_psd, qubit("S"), NormClass::Normalized),
            Err(Error::NotPsd(_))
        ));
        let half = ComplexMatrix::diag_real(&[0.25, 0.25]);
        assert!(State::new(half.clone(), qubit("S"), NormClass::Normalized).is_err());
        assert!(State::new(half, qubit("S"), NormClass::Subnormalized).is_ok());
    }

    #[test]
    fn append_embedding_examples() {
        let spec = EmbeddingSpec::append(mixed().relabeled("P")).unwrap();
        let s = zero();
        let same = embed_append(&s, &spec, 0).unwrap();
        assert_eq!(same.matrix(), s.matrix());
        let e = embed_append(&s, &spec, 2).unwrap();
        assert_eq!(e.dim(), 8);
        let back = reverse_embed(&e, &["S"]).unwrap();
        assert!(back.matrix().max_abs_diff(s.matrix()) < 1e-15);
    }

    #[test]
    fn orthogonal_embedding_examples() {
        let spec = EmbeddingSpec::direct_sum(1).unwrap();
        let e = embed_orthogonal(&zero(), &spec).unwrap();
        assert_eq!(e.dim(), 3);
        for i in 0..3 {
            assert_eq!(e.matrix()[(2, i)], ZERO);
            assert_eq!(e.matrix()[(i, 2)], ZERO);
        }
        let theta = orthogonal_free_state(2, 1).unwrap();
        assert!((trace_distance(&e, &theta).unwrap() - 1.0).abs() < 1e-14);
        let p = base_block_projector(2, 1);
        assert!((p.matmul(e.matrix()).trace().re - 1.0).abs() < 1e-15);
        assert!(p.matmul(theta.matrix()).trace().norm() < 1e-15);
        assert!(EmbeddingSpec::direct_sum(0).is_err());
    }

    #[test]
    fn shift_labels_single_branch_and_cycle() {
        let e = FlaggedEnsemble::uniform(vec![zero()]).unwrap();
        let s = cyclic_shift_labels(&e).unwrap();
        assert_eq!(s.branches()[0].label, 1);

        let e = FlaggedEnsemble::uniform(vec![zero(), one(), mixed()]).unwrap();
        let mut s = e.clone();
        for _ in 0..3 {
            s = cyclic_shift_labels(&s).unwrap();
        }
        assert!(flagged_trace_distance(&e, &s).unwrap() < 1e-15);
        let once = cyclic_shift_labels(&e).unwrap();
        assert!(once.branch(2).unwrap().body.matrix() == zero().matrix());
        assert!(once.branch(1).unwrap().body.matrix() == mixed().matrix());
    }

    #[test]
    fn shift_labels_requires_contiguous_labels() {
        let e = FlaggedEnsemble::new(vec![Branch {
            weight: 1.0,
            body: zero(),
            label: 2,
        }])
        .unwrap();
        assert!(cyclic_shift_labels(&e).is_err());
    }

    #[test]
    fn shift_quantum_rejects_bad_slots() {
        let body =
            State::maximally_mixed(SystemLayout::new([("A", 2), ("B", 3)]).unwrap()).unwrap();
        let e = FlaggedEnsemble::uniform(vec![body]).unwrap();
        assert!(cyclic_shift_quantum(&e, 2).is_err());
        assert!(cyclic_shift_quantum(&e, 1).is_ok());
    }

    #[test]
    fn ensemble_validation() {
        let bad = FlaggedEnsemble::new(vec![
            Branch {
                weight: 0.7,
                body: zero(),
                label: 1,
            },
            Branch {
                weight: 0.7,
                body: one(),
                label: 2,
            },
        ]);
        assert!(bad.is_err());
        let dup = FlaggedEnsemble::new(vec![
            Branch {
                weight: 0.5,
                body: zero(),
                label: 1,
            },
            Branch {
                weight: 0.5,
                body: one(),
                label: 1,
            },
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn state_file_round_trip_is_bit_exact() {
        let m = ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(0.1 + 0.2, 0.0),
                C64::new(1.0 / 3.0, -1e-17),
                C64::new(1.0 / 3.0, 1e-17),
                C64::new(0.7 - 1e-16, 0.0),
            ],
        )
        .unwrap();
        let tr = m.trace().re;
        let s = State::from_parts(m.scaled(1.0 / tr), qubit("S")).unwrap();
        let back = State::from_json(&s.to_json().unwrap()).unwrap();
        for (a, b) in s.matrix().data().iter().zip(back.matrix().data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert_eq!(back.layout(), s.layout());
    }
}
