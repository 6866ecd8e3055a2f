//! Completely positive maps between labeled systems.
//!
//! A [`QuantumOp`] keeps the structure it was built from (Kraus operators,
//! a Choi matrix, tensor products, sequences, partial traces, appended
//! states, permutations, mixtures) and applies itself to a block of
//! subsystems without materializing `I ⊗ Φ ⊗ I`. The Choi matrix
//! `J = Σ |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)` (input first) is built on demand.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{max_entangled_vector, Branch, FlaggedEnsemble, State};
use crate::tensor::{
    self, check_cap, inverse_permutation, kron, ComplexMatrix, SystemLayout, C64, DENSE_CAP, ONE,
    ZERO,
};

/// Tolerance for trace-preservation and complete-positivity checks.
pub const CHANNEL_TOL: f64 = 1e-9;

/// Relative eigenvalue cutoff when reading Kraus operators off a Choi matrix.
pub const KRAUS_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceClass {
    Preserving,
    Nonincreasing,
}

impl TraceClass {
    fn and(self, other: TraceClass) -> TraceClass {
        if self == TraceClass::Preserving && other == TraceClass::Preserving {
            TraceClass::Preserving
        } else {
            TraceClass::Nonincreasing
        }
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Identity,
    Kraus(Vec<ComplexMatrix>),
    /// Keep these input positions, in this order.
    Discard(Vec<usize>),
    /// Append a fixed state after the input.
    Append(ComplexMatrix),
    /// Output position `j` carries input position `perm[j]`.
    Permute(Vec<usize>),
    /// Factors act on consecutive input subsystems.
    Tensor(Vec<QuantumOp>),
    /// First element acts first.
    Sequence(Vec<QuantumOp>),
    Mixture(Vec<(f64, QuantumOp)>),
}

#[derive(Clone, Debug)]
pub struct QuantumOp {
    input: SystemLayout,
    output: SystemLayout,
    trace_class: TraceClass,
    repr: Repr,
}

fn classify_kraus_sum(sum: &ComplexMatrix) -> Result<TraceClass> {
    let id = ComplexMatrix::identity(sum.rows());
    if sum.max_abs_diff(&id) <= CHANNEL_TOL {
        return Ok(TraceClass::Preserving);
    }
    let top = tensor::eigvalsh(&sum.hermitian_part())?
        .last()
        .copied()
        .unwrap_or(0.0);
    if top <= 1.0 + CHANNEL_TOL {
        Ok(TraceClass::Nonincreasing)
    } else {
        Err(Error::invariant(
            "trace_nonincreasing",
            format!("largest eigenvalue of the Kraus sum is {top}"),
        ))
    }
}

impl QuantumOp {
    pub fn input(&self) -> &SystemLayout {
        &self.input
    }

    pub fn output(&self) -> &SystemLayout {
        &self.output
    }

    pub fn trace_class(&self) -> TraceClass {
        self.trace_class
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_class == TraceClass::Preserving
    }

    pub fn din(&self) -> usize {
        self.input.total_dim()
    }

    pub fn dout(&self) -> usize {
        self.output.total_dim()
    }

    /// Same map, new labels (dimensions must agree in total).
    pub fn relabeled(mut self, input: SystemLayout, output: SystemLayout) -> Result<Self> {
        if input.total_dim() != self.din() || output.total_dim() != self.dout() {
            return Err(Error::DimensionMismatch(format!(
                "cannot relabel {} -> {} as {input} -> {output}",
                self.input, self.output
            )));
        }
        if matches!(self.repr, Repr::Discard(_) | Repr::Permute(_))
            && input.dims() != self.input.dims()
        {
            // these index into the input subsystems
            let ks = self.kraus()?;
            self.repr = Repr::Kraus(ks);
        }
        self.input = input;
        self.output = output;
        Ok(self)
    }

    pub fn identity(layout: SystemLayout) -> Self {
        QuantumOp {
            input: layout.clone(),
            output: layout,
            trace_class: TraceClass::Preserving,
            repr: Repr::Identity,
        }
    }

    pub fn from_kraus(
        input: SystemLayout,
        output: SystemLayout,
        kraus: Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let (din, dout) = (input.total_dim(), output.total_dim());
        if kraus.is_empty() {
            return Err(Error::InvalidArgument("empty Kraus list".into()));
        }
        let mut sum = ComplexMatrix::zeros(din, din);
        for k in &kraus {
            if k.rows() != dout || k.cols() != din {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator is {}x{}, expected {dout}x{din}",
                    k.rows(),
                    k.cols()
                )));
            }
            sum += &k.adjoint().matmul(k);
        }
        let trace_class = classify_kraus_sum(&sum)?;
        Ok(QuantumOp {
            input,
            output,
            trace_class,
            repr: Repr::Kraus(kraus),
        })
    }

    pub fn unitary(layout: SystemLayout, u: ComplexMatrix) -> Result<Self> {
        let op = QuantumOp::from_kraus(layout.clone(), layout, vec![u])?;
        if !op.is_trace_preserving() {
            return Err(Error::InvalidArgument("matrix is not unitary".into()));
        }
        Ok(op)
    }

    /// Validates complete positivity and trace non-increase of `choi`.
    pub fn from_choi(
        input: SystemLayout,
        output: SystemLayout,
        choi: ComplexMatrix,
    ) -> Result<Self> {
        let (din, dout) = (input.total_dim(), output.total_dim());
        check_cap(din * dout)?;
        if choi.rows() != din * dout || !choi.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix is {}x{}, expected {}",
                choi.rows(),
                choi.cols(),
                din * dout
            )));
        }
        let kraus = kraus_from_choi(&choi, din, dout)?;
        QuantumOp::from_kraus(input, output, kraus)
    }

    /// Partial trace keeping the labeled input subsystems, in the given order.
    pub fn discard<S: AsRef<str>>(input: SystemLayout, keep: &[S]) -> Result<Self> {
        let pos = input.positions(keep)?;
        QuantumOp::discard_positions(input, pos)
    }

    pub fn discard_positions(input: SystemLayout, keep: Vec<usize>) -> Result<Self> {
        if keep.iter().any(|&p| p >= input.len()) {
            return Err(Error::DimensionMismatch(format!(
                "keep positions {keep:?} out of range for {input}"
            )));
        }
        let mut sorted = keep.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != keep.len() {
            return Err(Error::InvalidArgument(format!(
                "repeated keep positions {keep:?}"
            )));
        }
        Ok(QuantumOp {
            output: input.select(&keep),
            input,
            trace_class: TraceClass::Preserving,
            repr: Repr::Discard(keep),
        })
    }

    /// ρ ↦ ρ ⊗ σ
    pub fn append(input: SystemLayout, sigma: &State) -> Result<Self> {
        if (sigma.trace() - 1.0).abs() > CHANNEL_TOL {
            return Err(Error::InvalidArgument(
                "appended state must be normalized".into(),
            ));
        }
        Ok(QuantumOp {
            output: input.tensor(sigma.layout()),
            input,
            trace_class: TraceClass::Preserving,
            repr: Repr::Append(sigma.matrix().clone()),
        })
    }

    /// ρ ↦ tr(ρ) σ
    pub fn trace_and_replace(input: SystemLayout, sigma: &State) -> Result<Self> {
        let gone = QuantumOp::discard_positions(input, Vec::new())?;
        gone.then(&QuantumOp::append(SystemLayout::empty(), sigma)?)
    }

    /// Output position `j` carries input subsystem `perm[j]`.
    pub fn permutation(input: SystemLayout, perm: Vec<usize>) -> Result<Self> {
        let output = input.permuted(&perm)?;
        Ok(QuantumOp {
            input,
            output,
            trace_class: TraceClass::Preserving,
            repr: Repr::Permute(perm),
        })
    }

    pub fn tensor(a: &QuantumOp, b: &QuantumOp) -> QuantumOp {
        QuantumOp::tensor_all([a.clone(), b.clone()])
    }

    pub fn tensor_all(ops: impl IntoIterator<Item = QuantumOp>) -> QuantumOp {
        let ops: Vec<QuantumOp> = ops
            .into_iter()
            .flat_map(|o| match o.repr {
                Repr::Tensor(inner) => inner,
                _ => vec![o],
            })
            .collect();
        let mut input = SystemLayout::empty();
        let mut output = SystemLayout::empty();
        let mut tc = TraceClass::Preserving;
        for o in &ops {
            input = input.tensor(&o.input);
            output = output.tensor(&o.output);
            tc = tc.and(o.trace_class);
        }
        if ops.len() == 1 {
            return ops.into_iter().next().expect("one op");
        }
        QuantumOp {
            input,
            output,
            trace_class: tc,
            repr: Repr::Tensor(ops),
        }
    }

    pub fn tensor_power(&self, copies: usize) -> QuantumOp {
        if copies == 0 {
            return QuantumOp::identity(SystemLayout::empty());
        }
        QuantumOp::tensor_all(std::iter::repeat_n(self.clone(), copies))
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &QuantumOp) -> Result<QuantumOp> {
        QuantumOp::sequence(vec![self.clone(), next.clone()])
    }

    /// `compose(a, b) = a ∘ b`, so `b` acts first.
    pub fn compose(a: &QuantumOp, b: &QuantumOp) -> Result<QuantumOp> {
        b.then(a)
    }

    /// Applied in order: `ops[0]` acts first.
    pub fn sequence(ops: Vec<QuantumOp>) -> Result<QuantumOp> {
        if ops.is_empty() {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        for w in ops.windows(2) {
            if w[0].dout() != w[1].din() {
                return Err(Error::DimensionMismatch(format!(
                    "cannot compose {} into {}",
                    w[0].output, w[1].input
                )));
            }
        }
        let (first_in, last_out) = (ops[0].input.clone(), ops[ops.len() - 1].output.clone());
        let ops: Vec<QuantumOp> = ops
            .into_iter()
            .filter(|o| !matches!(o.repr, Repr::Identity))
            .flat_map(|o| match o.repr {
                Repr::Sequence(inner) => inner,
                _ => vec![o],
            })
            .collect();
        match ops.len() {
            0 => Ok(QuantumOp {
                input: first_in,
                output: last_out,
                trace_class: TraceClass::Preserving,
                repr: Repr::Identity,
            }),
            1 => Ok(ops.into_iter().next().expect("one op")),
            _ => {
                let tc = ops
                    .iter()
                    .fold(TraceClass::Preserving, |t, o| t.and(o.trace_class));
                Ok(QuantumOp {
                    input: ops[0].input.clone(),
                    output: ops[ops.len() - 1].output.clone(),
                    trace_class: tc,
                    repr: Repr::Sequence(ops),
                })
            }
        }
    }

    /// Σ cᵢ Φᵢ with cᵢ ≥ 0. Trace class is checked when the Choi matrix fits
    /// under the dense cap and otherwise follows from Σ cᵢ ≤ 1.
    pub fn mixture(terms: Vec<(f64, QuantumOp)>) -> Result<QuantumOp> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("empty mixture".into()));
        }
        let (din, dout) = (terms[0].1.din(), terms[0].1.dout());
        for (c, o) in &terms {
            if *c < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative mixture weight {c}"
                )));
            }
            if o.din() != din || o.dout() != dout {
                return Err(Error::DimensionMismatch(
                    "mixture terms differ in shape".into(),
                ));
            }
        }
        let total: f64 = terms.iter().map(|(c, _)| c).sum();
        let mut op = QuantumOp {
            input: terms[0].1.input.clone(),
            output: terms[0].1.output.clone(),
            trace_class: TraceClass::Nonincreasing,
            repr: Repr::Mixture(terms),
        };
        if din * dout <= DENSE_CAP {
            let choi = op.choi()?;
            let tr_out = tensor::partial_trace_positions(&choi, &[din, dout], &[0])?;
            op.trace_class = classify_kraus_sum(&tr_out.transpose())?;
        } else if (total - 1.0).abs() <= CHANNEL_TOL
            && op_terms(&op).iter().all(|(_, o)| o.is_trace_preserving())
        {
            op.trace_class = TraceClass::Preserving;
        } else if total > 1.0 + CHANNEL_TOL {
            return Err(Error::invariant(
                "trace_nonincreasing",
                format!("mixture weights sum to {total}"),
            ));
        }
        Ok(op)
    }

    pub fn scaled(&self, c: f64) -> Result<QuantumOp> {
        QuantumOp::mixture(vec![(c, self.clone())])
    }

    /// Apply to a full state on the input layout.
    pub fn apply(&self, s: &State) -> Result<State> {
        if s.dim() != self.din() {
            return Err(Error::DimensionMismatch(format!(
                "{} applied to {}",
                self.input,
                s.layout()
            )));
        }
        State::from_parts(self.apply_block(s.matrix(), 1, 1)?, self.output.clone())
    }

    pub fn apply_matrix(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if m.dim()? != self.din() {
            return Err(Error::DimensionMismatch(format!(
                "{} applied to a {}-dimensional operator",
                self.input,
                m.rows()
            )));
        }
        self.apply_block(m, 1, 1)
    }

    /// Apply to the subsystems of `s` at `positions` (in the order of this
    /// map's input). Outputs take the place of the first targeted subsystem.
    pub fn apply_on(&self, s: &State, positions: &[usize]) -> Result<State> {
        let (m, layout) = self.apply_on_parts(s.matrix(), s.layout(), positions)?;
        State::from_parts(m, layout)
    }

    pub fn apply_on_labels<S: AsRef<str>>(&self, s: &State, labels: &[S]) -> Result<State> {
        let pos = s.layout().positions(labels)?;
        self.apply_on(s, &pos)
    }

    fn apply_on_parts(
        &self,
        m: &ComplexMatrix,
        layout: &SystemLayout,
        positions: &[usize],
    ) -> Result<(ComplexMatrix, SystemLayout)> {
        let dims = layout.dims();
        if positions.iter().any(|&p| p >= dims.len()) {
            return Err(Error::DimensionMismatch(format!(
                "positions {positions:?} out of range for {layout}"
            )));
        }
        let target: usize = positions.iter().map(|&p| dims[p]).product();
        if target != self.din() {
            return Err(Error::DimensionMismatch(format!(
                "{} applied to {}-dimensional subsystems",
                self.input, target
            )));
        }
        let mut sorted = positions.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != positions.len() {
            return Err(Error::InvalidArgument(format!(
                "repeated positions {positions:?}"
            )));
        }
        let rest: Vec<usize> = (0..dims.len()).filter(|p| !positions.contains(p)).collect();
        let insert_at = rest
            .iter()
            .filter(|&&p| positions.first().is_some_and(|&f| p < f))
            .count();
        let out_layout = {
            let before = layout.select(&rest[..insert_at]);
            let after = layout.select(&rest[insert_at..]);
            before.tensor(&self.output).tensor(&after)
        };
        let contiguous = positions.windows(2).all(|w| w[1] == w[0] + 1);
        if contiguous {
            let start = positions.first().copied().unwrap_or(insert_at);
            let end = start + positions.len();
            let pre: usize = dims[..start].iter().product();
            let post: usize = dims[end..].iter().product();
            return Ok((self.apply_block(m, pre, post)?, out_layout));
        }
        // bring the targets to the front, act, move outputs back
        let perm: Vec<usize> = positions.iter().chain(&rest).copied().collect();
        let front = tensor::permute_positions(m, &dims, &perm)?;
        let rest_dim: usize = rest.iter().map(|&p| dims[p]).product();
        let acted = self.apply_block(&front, 1, rest_dim)?;
        let mut cur_dims = vec![self.dout()];
        cur_dims.extend(rest.iter().map(|&p| dims[p]));
        let mut back: Vec<usize> = (1..=insert_at).collect();
        back.push(0);
        back.extend(insert_at + 1..cur_dims.len());
        let m = tensor::permute_positions(&acted, &cur_dims, &back)?;
        Ok((m, out_layout))
    }

    /// Acts as `I_pre ⊗ Φ ⊗ I_post` on a square matrix of dimension
    /// `pre · din · post`.
    fn apply_block(&self, m: &ComplexMatrix, pre: usize, post: usize) -> Result<ComplexMatrix> {
        debug_assert_eq!(m.rows(), pre * self.din() * post);
        match &self.repr {
            Repr::Identity => Ok(m.clone()),
            Repr::Kraus(ks) => {
                check_cap(pre * self.dout() * post)?;
                Ok(kraus_local(ks, m, pre, post))
            }
            Repr::Discard(keep) => {
                let mut dims = vec![pre];
                dims.extend(self.input.dims());
                dims.push(post);
                let n = dims.len();
                let mut kept: Vec<usize> = keep.iter().map(|k| k + 1).collect();
                kept.push(0);
                kept.push(n - 1);
                let traced = tensor::partial_trace_positions(m, &dims, &kept)?;
                let mut sorted = keep.clone();
                sorted.sort_unstable();
                if &sorted == keep {
                    return Ok(traced);
                }
                let mut out_dims = vec![pre];
                out_dims.extend(sorted.iter().map(|&k| dims[k + 1]));
                out_dims.push(post);
                let mut perm = vec![0];
                perm.extend(
                    keep.iter()
                        .map(|k| 1 + sorted.binary_search(k).expect("present")),
                );
                perm.push(out_dims.len() - 1);
                tensor::permute_positions(&traced, &out_dims, &perm)
            }
            Repr::Append(sigma) => {
                check_cap(pre * self.dout() * post)?;
                Ok(append_local(m, sigma, pre, self.din(), post))
            }
            Repr::Permute(perm) => {
                let mut dims = vec![pre];
                dims.extend(self.input.dims());
                dims.push(post);
                let mut p = vec![0];
                p.extend(perm.iter().map(|x| x + 1));
                p.push(dims.len() - 1);
                tensor::permute_positions(m, &dims, &p)
            }
            Repr::Tensor(fs) => {
                let mut cur = m.clone();
                let mut done_out = 1usize;
                let mut remaining_in: usize = fs.iter().map(QuantumOp::din).product();
                for f in fs {
                    remaining_in /= f.din();
                    cur = f.apply_block(&cur, pre * done_out, remaining_in * post)?;
                    done_out *= f.dout();
                }
                Ok(cur)
            }
            Repr::Sequence(ops) => {
                let mut cur = m.clone();
                for o in ops {
                    cur = o.apply_block(&cur, pre, post)?;
                }
                Ok(cur)
            }
            Repr::Mixture(terms) => {
                let n = pre * self.dout() * post;
                check_cap(n)?;
                let mut out = ComplexMatrix::zeros(n, n);
                for (c, o) in terms {
                    out.axpy(C64::new(*c, 0.0), &o.apply_block(m, pre, post)?);
                }
                Ok(out)
            }
        }
    }

    /// J = Σ |i⟩⟨j| ⊗ Φ(|i⟩⟨j|), input first.
    pub fn choi(&self) -> Result<ComplexMatrix> {
        let (din, dout) = (self.din(), self.dout());
        check_cap(din * dout)?;
        let omega = ComplexMatrix::pure(&max_entangled_vector(din)).scaled(din as f64);
        self.apply_block(&omega, din, 1)
    }

    /// Kraus operators; composites go through the Choi matrix.
    pub fn kraus(&self) -> Result<Vec<ComplexMatrix>> {
        match &self.repr {
            Repr::Kraus(ks) => Ok(ks.clone()),
            Repr::Identity => Ok(vec![ComplexMatrix::identity(self.din())]),
            _ => kraus_from_choi(&self.choi()?, self.din(), self.dout()),
        }
    }

    /// Same map stored as Kraus operators.
    pub fn materialized(&self) -> Result<QuantumOp> {
        Ok(QuantumOp {
            input: self.input.clone(),
            output: self.output.clone(),
            trace_class: self.trace_class,
            repr: Repr::Kraus(self.kraus()?),
        })
    }

    /// Heisenberg picture Φ†(Y) = Σ K† Y K.
    pub fn adjoint_apply(&self, y: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut out = ComplexMatrix::zeros(self.din(), self.din());
        for k in self.kraus()? {
            out += &k.adjoint().matmul(y).matmul(&k);
        }
        Ok(out)
    }

    /// Complementary map into the Kraus index space: ρ ↦ [tr(Kᵢ ρ Kⱼ†)].
    pub fn complementary(&self) -> Result<QuantumOp> {
        let ks = self.kraus()?;
        let (din, dout, r) = (self.din(), self.dout(), ks.len());
        // Kraus operators of the complement: Fₐ[i, x] = Kᵢ[a, x]
        let fs = (0..dout)
            .map(|a| ComplexMatrix::from_fn(r, din, |i, x| ks[i][(a, x)]))
            .collect();
        QuantumOp::from_kraus(self.input.clone(), SystemLayout::single("E", r), fs)
    }
}

fn op_terms(op: &QuantumOp) -> &[(f64, QuantumOp)] {
    match &op.repr {
        Repr::Mixture(t) => t,
        _ => &[],
    }
}

/// Kraus operators of the map with Choi matrix `choi` (eigen cutoff
/// relative to the largest eigenvalue).
pub fn kraus_from_choi(
    choi: &ComplexMatrix,
    din: usize,
    dout: usize,
) -> Result<Vec<ComplexMatrix>> {
    let (vals, vecs) = tensor::eigh(choi)?;
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    if let Some(&min) = vals.first() {
        if min < -CHANNEL_TOL * (1.0 + top) {
            return Err(Error::invariant(
                "completely_positive",
                format!("Choi matrix has eigenvalue {min}"),
            ));
        }
    }
    let mut out = Vec::new();
    for (k, &lam) in vals.iter().enumerate().rev() {
        if lam <= KRAUS_CUTOFF * top.max(1.0) {
            continue;
        }
        let s = lam.sqrt();
        out.push(ComplexMatrix::from_fn(dout, din, |o, i| {
            vecs[(i * dout + o, k)] * s
        }));
    }
    if out.is_empty() {
        out.push(ComplexMatrix::zeros(dout, din));
    }
    Ok(out)
}

/// Σ_K (I⊗K⊗I) M (I⊗K⊗I)†
fn kraus_local(ks: &[ComplexMatrix], m: &ComplexMatrix, pre: usize, post: usize) -> ComplexMatrix {
    let (dout, din) = (ks[0].rows(), ks[0].cols());
    let n_in = pre * din * post;
    let n_out = pre * dout * post;
    let mut out = ComplexMatrix::zeros(n_out, n_out);
    let src = m.data();
    for k in ks {
        let mut t = vec![ZERO; n_out * n_in];
        for p in 0..pre {
            for a in 0..dout {
                for i in 0..din {
                    let c = k[(a, i)];
                    if c == ZERO {
                        continue;
                    }
                    for s in 0..post {
                        let ro = ((p * dout + a) * post + s) * n_in;
                        let ri = ((p * din + i) * post + s) * n_in;
                        for (d, x) in t[ro..ro + n_in].iter_mut().zip(&src[ri..ri + n_in]) {
                            *d += c * x;
                        }
                    }
                }
            }
        }
        let kc = k.conj();
        let dst = out.data_mut();
        for r in 0..n_out {
            let trow = &t[r * n_in..(r + 1) * n_in];
            let orow = &mut dst[r * n_out..(r + 1) * n_out];
            for q in 0..pre {
                for c in 0..dout {
                    for j in 0..din {
                        let z = kc[(c, j)];
                        if z == ZERO {
                            continue;
                        }
                        let s0 = (q * din + j) * post;
                        let d0 = (q * dout + c) * post;
                        for (d, x) in orow[d0..d0 + post].iter_mut().zip(&trow[s0..s0 + post]) {
                            *d += z * x;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Builds I_pre ⊗ (· ⊗ σ) ⊗ I_post applied to `m`.
fn append_local(
    m: &ComplexMatrix,
    sigma: &ComplexMatrix,
    pre: usize,
    din: usize,
    post: usize,
) -> ComplexMatrix {
    let ds = sigma.rows();
    let n_in = pre * din * post;
    let blk = din;
    let n_out = pre * blk * ds * post;
    let mut out = ComplexMatrix::zeros(n_out, n_out);
    let dst = out.data_mut();
    for r in 0..n_in {
        let (p, rem) = (r / (blk * post), r % (blk * post));
        let (i, s) = (rem / post, rem % post);
        for c in 0..n_in {
            let v = m[(r, c)];
            if v == ZERO {
                continue;
            }
            let (q, rem) = (c / (blk * post), c % (blk * post));
            let (j, t) = (rem / post, rem % post);
            for x in 0..ds {
                let ro = ((p * blk + i) * ds + x) * post + s;
                for y in 0..ds {
                    let co = ((q * blk + j) * ds + y) * post + t;
                    dst[ro * n_out + co] = v * sigma[(x, y)];
                }
            }
        }
    }
    out
}

/// Replace the input subsystems at `positions` by the state `pi` (on those
/// subsystems, in layout order) and keep everything else.
pub fn replace_inputs(layout: &SystemLayout, positions: &[usize], pi: &State) -> Result<QuantumOp> {
    let kept: Vec<usize> = (0..layout.len())
        .filter(|p| !positions.contains(p))
        .collect();
    let mut replaced: Vec<usize> = positions.to_vec();
    replaced.sort_unstable();
    let expected: usize = replaced
        .iter()
        .map(|&p| layout.subsystems()[p].dim)
        .product();
    if pi.dim() != expected {
        return Err(Error::DimensionMismatch(format!(
            "replacement state of dimension {} for {expected}-dimensional inputs",
            pi.dim()
        )));
    }
    let pi = pi.with_layout(layout.select(&replaced))?;
    let discard = QuantumOp::discard_positions(layout.clone(), kept.clone())?;
    let append = QuantumOp::append(layout.select(&kept), &pi)?;
    // [kept..., replaced...] back to layout order
    let order: Vec<usize> = kept.iter().chain(&replaced).copied().collect();
    let perm = inverse_permutation(&order);
    let restore = QuantumOp::permutation(append.output().clone(), perm)?;
    let op = QuantumOp::sequence(vec![discard, append, restore])?;
    op.relabeled(layout.clone(), layout.clone())
}

/// Nᵖ: inputs outside `keep_in` are fed `pi` (maximally mixed by default),
/// outputs outside `keep_out` are traced out.
pub fn reduced_channel<S: AsRef<str>>(
    n: &QuantumOp,
    keep_in: &[S],
    keep_out: &[S],
    pi: Option<&State>,
) -> Result<QuantumOp> {
    let kin = n.input().positions(keep_in)?;
    let kout = n.output().positions(keep_out)?;
    let disc: Vec<usize> = (0..n.input().len()).filter(|p| !kin.contains(p)).collect();
    let disc_layout = n.input().select(&disc);
    let pi = match pi {
        Some(p) => p.with_layout(disc_layout)?,
        None => State::maximally_mixed(disc_layout)?,
    };
    let append = QuantumOp::append(n.input().select(&kin), &pi)?;
    let order: Vec<usize> = kin.iter().chain(&disc).copied().collect();
    let restore = QuantumOp::permutation(append.output().clone(), inverse_permutation(&order))?
        .relabeled(append.output().clone(), n.input().clone())?;
    let tail = QuantumOp::discard_positions(n.output().clone(), kout)?;
    QuantumOp::sequence(vec![append, restore, n.clone(), tail])
}

/// Checks tr_{B2}∘N = tr_{B2}∘N∘(id ⊗ R^π_{A2}) through the trace norm of the
/// Choi difference, which bounds the diamond norm from above.
pub fn is_non_signaling<S: AsRef<str>>(
    n: &QuantumOp,
    a2: &[S],
    b2: &[S],
    tol: f64,
) -> Result<bool> {
    Ok(signaling_defect(n, a2, b2)? <= tol)
}

/// ‖J(tr_{B2}∘N) − J(tr_{B2}∘N∘R^π_{A2})‖₁
pub fn signaling_defect<S: AsRef<str>>(n: &QuantumOp, a2: &[S], b2: &[S]) -> Result<f64> {
    let a2 = n.input().positions(a2)?;
    let b2 = n.output().positions(b2)?;
    let b1: Vec<usize> = (0..n.output().len()).filter(|p| !b2.contains(p)).collect();
    let tail = QuantumOp::discard_positions(n.output().clone(), b1)?;
    let lhs = n.then(&tail)?;
    let mut sorted = a2.clone();
    sorted.sort_unstable();
    let pi = State::maximally_mixed(n.input().select(&sorted))?;
    let rhs = replace_inputs(n.input(), &a2, &pi)?.then(&lhs)?;
    tensor::trace_norm(&(&lhs.choi()? - &rhs.choi()?))
}

/// Branch-conditioned operations: the branch with label `l` gets `c · Φ_l`.
#[derive(Clone, Debug, Default)]
pub struct ControlledOp {
    pub cases: BTreeMap<usize, (QuantumOp, f64)>,
}

impl ControlledOp {
    pub fn new() -> Self {
        ControlledOp::default()
    }

    pub fn with_case(mut self, label: usize, op: QuantumOp, scale: f64) -> Self {
        self.cases.insert(label, (op, scale));
        self
    }
}

/// Applies each case to the whole branch body.
pub fn apply_controlled(c: &ControlledOp, e: &FlaggedEnsemble) -> Result<FlaggedEnsemble> {
    apply_controlled_at(c, e, 0)
}

/// Applies each case to the body subsystems starting at `offset`.
pub fn apply_controlled_at(
    c: &ControlledOp,
    e: &FlaggedEnsemble,
    offset: usize,
) -> Result<FlaggedEnsemble> {
    let branches = e
        .branches()
        .iter()
        .map(|b| {
            let (op, scale) = c.cases.get(&b.label).ok_or_else(|| {
                Error::InvalidArgument(format!("no controlled case for label {}", b.label))
            })?;
            let body = apply_region(op, &b.body, offset)?;
            let body = if *scale == 1.0 {
                body
            } else {
                body.scaled(*scale)?
            };
            Ok(Branch {
                weight: b.weight,
                body,
                label: b.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FlaggedEnsemble::new(branches)
}

/// Apply `op` to the subsystems of `s` from `offset` to the end.
pub fn apply_region(op: &QuantumOp, s: &State, offset: usize) -> Result<State> {
    let positions: Vec<usize> = (offset..s.layout().len()).collect();
    op.apply_on(s, &positions)
}

pub fn pauli_i() -> ComplexMatrix {
    ComplexMatrix::identity(2)
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).expect("2x2")
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_vec(
        2,
        2,
        vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO],
    )
    .expect("2x2")
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).expect("2x2")
}

/// ρ ↦ (1-λ)ρ + λ tr(ρ) I/d on a `d`-dimensional system.
pub fn depolarizing(layout: SystemLayout, lambda: f64) -> Result<QuantumOp> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "depolarizing parameter {lambda}"
        )));
    }
    let d = layout.total_dim();
    let omega = ComplexMatrix::pure(&max_entangled_vector(d)).scaled(d as f64);
    let mut choi = omega.scaled(1.0 - lambda);
    choi.axpy(
        C64::new(lambda / d as f64, 0.0),
        &ComplexMatrix::identity(d * d),
    );
    QuantumOp::from_choi(layout.clone(), layout, choi)
}

/// ρ ↦ (1-p)ρ + p ZρZ
pub fn dephasing(layout: SystemLayout, p: f64) -> Result<QuantumOp> {
    QuantumOp::from_kraus(
        layout.clone(),
        layout,
        vec![
            pauli_i().scaled((1.0 - p).sqrt()),
            pauli_z().scaled(p.sqrt()),
        ],
    )
}

pub fn amplitude_damping(layout: SystemLayout, gamma: f64) -> Result<QuantumOp> {
    let k0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, (1.0 - gamma).sqrt()])?;
    let k1 = ComplexMatrix::from_real(2, 2, &[0.0, gamma.sqrt(), 0.0, 0.0])?;
    QuantumOp::from_kraus(layout.clone(), layout, vec![k0, k1])
}

/// Measure in the computational basis and prepare the outcome.
pub fn measure_prepare(layout: SystemLayout) -> Result<QuantumOp> {
    let d = layout.total_dim();
    let ks = (0..d).map(|i| ComplexMatrix::unit(d, i, i)).collect();
    QuantumOp::from_kraus(layout.clone(), layout, ks)
}

/// Embeds a `ComplexMatrix` Kraus list as a map between single systems.
pub fn kraus_map(din: usize, dout: usize, ks: Vec<ComplexMatrix>) -> Result<QuantumOp> {
    QuantumOp::from_kraus(
        SystemLayout::single("in", din),
        SystemLayout::single("out", dout),
        ks,
    )
}

/// I ⊗ |ψ⟩ style helper: column vector as a `d x 1` matrix.
pub fn ket(v: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(v.len(), 1, |r, _| v[r])
}

/// Kronecker product of Kraus operator lists.
pub fn kraus_product(a: &[ComplexMatrix], b: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| kron(x, y)))
        .collect()
}

/// |0⟩⟨0| on a `d`-dimensional system.
pub fn ground_state(d: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(d, d);
    m[(0, 0)] = ONE;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::trace_distance;

    fn q(label: &str) -> SystemLayout {
        SystemLayout::single(label, 2)
    }

    fn plus() -> State {
        let s = 1.0 / 2f64.sqrt();
        State::pure(&[C64::new(s, 0.0), C64::new(s, 0.0)], q("A")).unwrap()
    }

    #[test]
    fn choi_of_identity_is_unnormalized_max_entangled() {
        let id = QuantumOp::identity(q("A"));
        let j = id.choi().unwrap();
        let omega = ComplexMatrix::pure(&max_entangled_vector(2)).scaled(2.0);
        assert!(j.max_abs_diff(&omega) < 1e-15);
    }

    #[test]
    fn choi_and_kraus_round_trip() {
        let ch = amplitude_damping(q("A"), 0.3).unwrap();
        let j = ch.choi().unwrap();
        let back = QuantumOp::from_choi(q("A"), q("A"), j.clone()).unwrap();
        assert!(back.choi().unwrap().max_abs_diff(&j) < 1e-12);
        assert!(back.is_trace_preserving());
    }

    #[test]
    fn from_choi_rejects_non_cp_and_trace_increasing() {
        let mut bad = ComplexMatrix::identity(4);
        bad[(0, 0)] = C64::new(-0.5, 0.0);
        assert!(QuantumOp::from_choi(q("A"), q("A"), bad).is_err());
        let big = ComplexMatrix::identity(4).scaled(2.0);
        assert!(QuantumOp::from_choi(q("A"), q("A"), big).is_err());
        let sub = ComplexMatrix::identity(4).scaled(0.25);
        let op = QuantumOp::from_choi(q("A"), q("A"), sub).unwrap();
        assert_eq!(op.trace_class(), TraceClass::Nonincreasing);
    }

    #[test]
    fn apply_on_matches_dense_tensor_with_identity() {
        let ch = amplitude_damping(q("B"), 0.4).unwrap();
        let layout = SystemLayout::new([("A", 2), ("B", 2), ("C", 2)]).unwrap();
        let v: Vec<C64> = (0..8)
            .map(|i| C64::new(i as f64 + 1.0, 0.5 * i as f64))
            .collect();
        let s = State::pure(&v, layout).unwrap().normalized().unwrap();
        let got = ch.apply_on(&s, &[1]).unwrap();
        let mut want = ComplexMatrix::zeros(8, 8);
        for k in ch.kraus().unwrap() {
            let big = tensor::kron_all([&pauli_i(), &k, &pauli_i()]);
            want += &big.sandwich(s.matrix());
        }
        assert!(got.matrix().max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn non_contiguous_targets_land_at_first_position() {
        let layout = SystemLayout::new([("A", 2), ("B", 3), ("C", 2)]).unwrap();
        let a = State::basis(1, q("A")).unwrap();
        let b = State::maximally_mixed(SystemLayout::single("B", 3)).unwrap();
        let c = State::basis(0, q("C")).unwrap();
        let s = a
            .tensor(&b)
            .unwrap()
            .tensor(&c)
            .unwrap()
            .with_layout(layout)
            .unwrap();
        let op = QuantumOp::identity(SystemLayout::new([("x", 2), ("y", 2)]).unwrap());
        // targets (C, A): outputs go where C was, after B
        let out = op.apply_on(&s, &[2, 0]).unwrap();
        assert_eq!(
            out.layout().labels().collect::<Vec<_>>(),
            vec!["B", "x", "y"]
        );
        let x = out.partial_trace_positions(&[1]).unwrap();
        let y = out.partial_trace_positions(&[2]).unwrap();
        assert!(x.matrix().max_abs_diff(c.matrix()) < 1e-15);
        assert!(y.matrix().max_abs_diff(a.matrix()) < 1e-15);
        // targets (A, C): outputs go to the front
        let out = op.apply_on(&s, &[0, 2]).unwrap();
        assert_eq!(out.layout().dims(), vec![2, 2, 3]);
        let x = out.partial_trace_positions(&[0]).unwrap();
        assert!(x.matrix().max_abs_diff(a.matrix()) < 1e-15);
    }

    #[test]
    fn discard_append_and_permute() {
        let layout = SystemLayout::new([("A", 2), ("B", 2)]).unwrap();
        let s = plus().tensor(&State::basis(1, q("B")).unwrap()).unwrap();
        let keep_b = QuantumOp::discard(layout.clone(), &["B"]).unwrap();
        let out = keep_b.apply(&s).unwrap();
        assert!(out.matrix().max_abs_diff(&ComplexMatrix::unit(2, 1, 1)) < 1e-15);

        let swap = QuantumOp::permutation(layout.clone(), vec![1, 0]).unwrap();
        let swapped = swap.apply(&s).unwrap();
        let want = State::basis(1, q("B")).unwrap().tensor(&plus()).unwrap();
        assert!(swapped.matrix().max_abs_diff(want.matrix()) < 1e-15);

        let app = QuantumOp::append(layout, &plus()).unwrap();
        let out = app.apply(&s).unwrap();
        let want = s.tensor(&plus()).unwrap();
        assert!(out.matrix().max_abs_diff(want.matrix()) < 1e-15);
    }

    #[test]
    fn structured_choi_matches_kraus_choi() {
        let a = amplitude_damping(q("A"), 0.2).unwrap();
        let b = dephasing(q("B"), 0.3).unwrap();
        let t = QuantumOp::tensor(&a, &b);
        let dense = QuantumOp::from_kraus(
            t.input().clone(),
            t.output().clone(),
            kraus_product(&a.kraus().unwrap(), &b.kraus().unwrap()),
        )
        .unwrap();
        assert!(t.choi().unwrap().max_abs_diff(&dense.choi().unwrap()) < 1e-14);

        let seq = a.then(&dephasing(q("A"), 0.3).unwrap()).unwrap();
        let dense = QuantumOp::from_kraus(
            q("A"),
            q("A"),
            dephasing(q("A"), 0.3)
                .unwrap()
                .kraus()
                .unwrap()
                .iter()
                .flat_map(|x| a.kraus().unwrap().into_iter().map(move |y| x.matmul(&y)))
                .collect(),
        )
        .unwrap();
        assert!(seq.choi().unwrap().max_abs_diff(&dense.choi().unwrap()) < 1e-14);
    }

    #[test]
    fn mixture_and_trace_class() {
        let id = QuantumOp::identity(q("A"));
        let z = QuantumOp::unitary(q("A"), pauli_z()).unwrap();
        let mix = QuantumOp::mixture(vec![(0.7, id.clone()), (0.3, z)]).unwrap();
        assert!(mix.is_trace_preserving());
        let deph = dephasing(q("A"), 0.3).unwrap();
        assert!(mix.choi().unwrap().max_abs_diff(&deph.choi().unwrap()) < 1e-15);
        let half = id.scaled(0.5).unwrap();
        assert_eq!(half.trace_class(), TraceClass::Nonincreasing);
        assert!(QuantumOp::mixture(vec![(1.5, id)]).is_err());
    }

    #[test]
    fn complementary_of_unitary_is_trivial() {
        let h = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 1.0, -1.0])
            .unwrap()
            .scaled(1.0 / 2f64.sqrt());
        let u = QuantumOp::unitary(q("A"), h).unwrap();
        let c = u.complementary().unwrap();
        assert_eq!(c.dout(), 1);
        let out = c.apply(&plus()).unwrap();
        assert!((out.trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn complementary_of_dephasing() {
        let d = dephasing(q("A"), 0.5).unwrap();
        let c = d.complementary().unwrap();
        let out = c.apply(&plus()).unwrap();
        // ρ = |+⟩⟨+| gives E output with off-diagonal tr(Z ρ)/2 = 0
        assert!((out.matrix()[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!(out.matrix()[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn reduced_channel_of_product() {
        let a = amplitude_damping(q("A"), 0.2).unwrap();
        let b = dephasing(q("B"), 0.3).unwrap();
        let t = QuantumOp::tensor(&a, &b);
        let r = reduced_channel(&t, &["A"], &["A"], None).unwrap();
        assert!(r.choi().unwrap().max_abs_diff(&a.choi().unwrap()) < 1e-14);
        let r = reduced_channel(&t, &["B"], &["B"], None).unwrap();
        assert!(r.choi().unwrap().max_abs_diff(&b.choi().unwrap()) < 1e-14);
    }

    #[test]
    fn non_signaling_examples() {
        let a = amplitude_damping(q("A"), 0.2).unwrap();
        let b = dephasing(q("B"), 0.3).unwrap();
        let product = QuantumOp::tensor(&a, &b);
        assert!(is_non_signaling(&product, &["B"], &["B"], 1e-10).unwrap());
        let layout = SystemLayout::new([("A", 2), ("B", 2)]).unwrap();
        // relabeling permutation: labels travel with the subsystems
        let relabel = QuantumOp::permutation(layout.clone(), vec![1, 0]).unwrap();
        assert!(is_non_signaling(&relabel, &["B"], &["B"], 1e-10).unwrap());
        // swap gate: output A carries input B
        let swap = ComplexMatrix::from_fn(4, 4, |r, c| {
            if r == ((c & 1) << 1 | c >> 1) {
                ONE
            } else {
                ZERO
            }
        });
        let swap = QuantumOp::unitary(layout, swap).unwrap();
        assert!(!is_non_signaling(&swap, &["B"], &["B"], 1e-6).unwrap());
        assert!(is_non_signaling(&swap, &["A"], &["A"], 1e-6).is_ok());
    }

    #[test]
    fn controlled_op_acts_per_branch() {
        let e = FlaggedEnsemble::uniform(vec![plus(), plus()]).unwrap();
        let z = QuantumOp::unitary(q("A"), pauli_z()).unwrap();
        let c = ControlledOp::new()
            .with_case(1, QuantumOp::identity(q("A")), 1.0)
            .with_case(2, z, 1.0);
        let out = apply_controlled(&c, &e).unwrap();
        assert!(trace_distance(&out.branch(1).unwrap().body, &plus()).unwrap() < 1e-15);
        assert!(
            (trace_distance(&out.branch(2).unwrap().body, &plus()).unwrap() - 1.0).abs() < 1e-14
        );
        let missing = ControlledOp::new().with_case(1, QuantumOp::identity(q("A")), 1.0);
        assert!(apply_controlled(&missing, &e).is_err());
    }

    #[test]
    fn trace_and_replace_outputs_sigma() {
        let r = QuantumOp::trace_and_replace(q("A"), &plus()).unwrap();
        let out = r.apply(&State::basis(1, q("A")).unwrap()).unwrap();
        assert!(out.matrix().max_abs_diff(plus().matrix()) < 1e-15);
    }
}
