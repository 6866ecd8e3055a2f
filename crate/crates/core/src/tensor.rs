//! Dense complex matrices with multi-subsystem bookkeeping.
//!
//! Matrices are stored row-major. Multi-index conventions follow the usual
//! Kronecker ordering: the first subsystem of a [`SystemLayout`] is the most
//! significant digit of a flat index.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest matrix dimension any dense routine will materialize.
pub const DENSE_CAP: usize = 4096;
/// Anti-Hermitian residual tolerated (and symmetrized away) before eigensolves.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Negative eigenvalues above `-PSD_TOL` are treated as numerical zero.
pub const PSD_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn check_cap(dim: usize) -> Result<()> {
    if dim > DENSE_CAP {
        Err(Error::CapExceeded {
            dim,
            cap: DENSE_CAP,
        })
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
}

/// Ordered list of labeled subsystem dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(String, usize)>", into = "Vec<(String, usize)>")]
pub struct SystemLayout {
    subsystems: Vec<Subsystem>,
}

impl TryFrom<Vec<(String, usize)>> for SystemLayout {
    type Error = Error;
    fn try_from(v: Vec<(String, usize)>) -> Result<Self> {
        SystemLayout::new(v)
    }
}

impl From<SystemLayout> for Vec<(String, usize)> {
    fn from(l: SystemLayout) -> Self {
        l.subsystems.into_iter().map(|s| (s.label, s.dim)).collect()
    }
}

impl SystemLayout {
    pub fn new<L: Into<String>>(items: impl IntoIterator<Item = (L, usize)>) -> Result<Self> {
        let mut subsystems: Vec<Subsystem> = Vec::new();
        for (label, dim) in items {
            let label = label.into();
            if dim == 0 {
                return Err(Error::InvalidArgument(format!(
                    "subsystem `{label}` has zero dimension"
                )));
            }
            if subsystems.iter().any(|s| s.label == label) {
                return Err(Error::DuplicateLabel(label));
            }
            subsystems.push(Subsystem { label, dim });
        }
        let layout = SystemLayout { subsystems };
        layout
            .subsystems
            .iter()
            .try_fold(1usize, |acc, s| acc.checked_mul(s.dim))
            .ok_or_else(|| Error::InvalidArgument("layout dimension overflows".into()))?;
        Ok(layout)
    }

    pub fn empty() -> Self {
        SystemLayout::default()
    }

    pub fn single(label: impl Into<String>, dim: usize) -> Self {
        SystemLayout::new([(label.into(), dim)]).expect("single subsystem layout")
    }

    /// `count` subsystems of dimension `dim` labeled `{prefix}1 .. {prefix}{count}`.
    pub fn uniform(prefix: &str, dim: usize, count: usize) -> Self {
        SystemLayout::new((1..=count).map(|i| (format!("{prefix}{i}"), dim)))
            .expect("uniform layout")
    }

    pub fn total_dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.dim).product()
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.dim).collect()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.subsystems.iter().map(|s| s.label.as_str())
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn positions<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.position(l.as_ref())).collect()
    }

    /// Sub-layout made of the given positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> SystemLayout {
        SystemLayout {
            subsystems: positions
                .iter()
                .map(|&p| self.subsystems[p].clone())
                .collect(),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<SystemLayout> {
        check_permutation(perm, self.len())?;
        Ok(self.select(perm))
    }

    /// Layout of `self ⊗ other`. Labels of `other` that collide with labels
    /// already present get primes appended until unique.
    pub fn tensor(&self, other: &SystemLayout) -> SystemLayout {
        let mut out = self.clone();
        for s in &other.subsystems {
            let mut label = s.label.clone();
            while out.subsystems.iter().any(|t| t.label == label) {
                label.push('\'');
            }
            out.subsystems.push(Subsystem { label, dim: s.dim });
        }
        out
    }

    /// Same dimensions, labels replaced by `{prefix}{i}`.
    pub fn relabeled(&self, prefix: &str) -> SystemLayout {
        SystemLayout {
            subsystems: self
                .subsystems
                .iter()
                .enumerate()
                .map(|(i, s)| Subsystem {
                    label: format!("{prefix}{}", i + 1),
                    dim: s.dim,
                })
                .collect(),
        }
    }
}

impl fmt::Display for SystemLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.subsystems.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}:{}", s.label, s.dim)?;
        }
        write!(f, "]")
    }
}

pub(crate) fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    if perm.len() != len {
        return Err(Error::NotAPermutation(perm.to_vec()));
    }
    for &p in perm {
        if p >= len || seen[p] {
            return Err(Error::NotAPermutation(perm.to_vec()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Row-major strides for a list of subsystem dimensions.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Flat offsets in the full space for every multi-index over `positions`
/// (enumerated row-major in the order given).
pub(crate) fn offsets(dims: &[usize], positions: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut out = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(out.len() * dims[p]);
        for &base in &out {
            for i in 0..dims[p] {
                next.push(base + i * st[p]);
            }
        }
        out = next;
    }
    out
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{}", self.rows, self.cols)?;
        if self.rows * self.cols <= 64 {
            for r in 0..self.rows {
                let row: Vec<String> = (0..self.cols)
                    .map(|c| {
                        let z = self[(r, c)];
                        format!("{:+.4}{:+.4}i", z.re, z.im)
                    })
                    .collect();
                writeln!(f, "  {}", row.join(" "))?;
            }
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// |v⟩⟨w|
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        Self::from_fn(v.len(), w.len(), |r, c| v[r] * w[c].conj())
    }

    /// Projector onto the normalized vector v.
    pub fn pure(v: &[C64]) -> Self {
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let mut m = Self::outer(v, v);
        m.scale_mut(1.0 / norm2);
        m
    }

    /// |i⟩⟨j| in dimension n.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = ONE;
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn dim(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale_mut(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale_mut(s);
        m
    }

    pub fn scaled_c(&self, s: C64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// self += s * other
    pub fn axpy(&mut self, s: C64, other: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        let n = other.cols;
        for r in 0..self.rows {
            let out_row = &mut out.data[r * n..(r + 1) * n];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// A X A†
    pub fn sandwich(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(x).matmul(&self.adjoint())
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest |H_ij - conj(H_ji)|.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// (H + H†)/2
    pub fn hermitian_part(&self) -> ComplexMatrix {
        Self::from_fn(self.rows, self.cols, |r, c| {
            (self[(r, c)] + self[(c, r)].conj()) * 0.5
        })
    }

    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        kron(self, other)
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }

    /// Block of rows `r0..r0+nr`, columns `c0..c0+nc`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> ComplexMatrix {
        Self::from_fn(nr, nc, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &ComplexMatrix) {
        for r in 0..b.rows {
            for c in 0..b.cols {
                self[(r0 + r, c0 + c)] = b[(r, c)];
            }
        }
    }

    /// Hilbert–Schmidt inner product tr(A† B).
    pub fn inner(&self, other: &ComplexMatrix) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.axpy(ONE, rhs);
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.axpy(-ONE, rhs);
        out
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scaled(-1.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        self.axpy(ONE, rhs);
    }
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut data = vec![ZERO; rows * cols];
    for ar in 0..a.rows {
        for br in 0..b.rows {
            let row = ar * b.rows + br;
            let base = row * cols;
            for ac in 0..a.cols {
                let x = a[(ar, ac)];
                if x == ZERO {
                    continue;
                }
                let b_row = &b.data[br * b.cols..(br + 1) * b.cols];
                let dst = &mut data[base + ac * b.cols..base + (ac + 1) * b.cols];
                for (d, y) in dst.iter_mut().zip(b_row) {
                    *d = x * y;
                }
            }
        }
    }
    ComplexMatrix { rows, cols, data }
}

/// Kronecker product of a list; the empty list gives the 1x1 identity.
pub fn kron_all<'a>(ms: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    ms.into_iter()
        .fold(ComplexMatrix::identity(1), |acc, m| kron(&acc, m))
}

fn check_layout_square(m: &ComplexMatrix, dims: &[usize]) -> Result<usize> {
    let d = m.dim()?;
    let total: usize = dims.iter().product();
    if d != total {
        return Err(Error::DimensionMismatch(format!(
            "matrix dimension {d} does not match layout dimension {total}"
        )));
    }
    Ok(d)
}

/// Partial trace keeping the subsystems at `keep` (any order in, layout
/// order out).
pub fn partial_trace_positions(
    m: &ComplexMatrix,
    dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix> {
    check_layout_square(m, dims)?;
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&p| p >= dims.len()) {
        return Err(Error::DimensionMismatch(format!(
            "position out of range in {keep:?}"
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|p| !keep.contains(p)).collect();
    let ko = offsets(dims, &keep);
    let to = offsets(dims, &traced);
    let n = m.cols;
    let dk = ko.len();
    let mut out = ComplexMatrix::zeros(dk, dk);
    for (a, &ka) in ko.iter().enumerate() {
        for (b, &kb) in ko.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &to {
                acc += m.data[(ka + t) * n + kb + t];
            }
            out.data[a * dk + b] = acc;
        }
    }
    Ok(out)
}

/// Partial trace over everything not in `keep` (labels).
pub fn partial_trace<S: AsRef<str>>(
    m: &ComplexMatrix,
    layout: &SystemLayout,
    keep: &[S],
) -> Result<ComplexMatrix> {
    let pos = layout.positions(keep)?;
    partial_trace_positions(m, &layout.dims(), &pos)
}

/// Conjugation by the subsystem permutation: new position `j` holds old
/// subsystem `perm[j]`.
pub fn permute_positions(
    m: &ComplexMatrix,
    dims: &[usize],
    perm: &[usize],
) -> Result<ComplexMatrix> {
    check_layout_square(m, dims)?;
    check_permutation(perm, dims.len())?;
    let map = offsets(dims, perm);
    let n = m.cols;
    let mut out = ComplexMatrix::zeros(n, n);
    for (i, &oi) in map.iter().enumerate() {
        let src = &m.data[oi * n..(oi + 1) * n];
        let dst = &mut out.data[i * n..(i + 1) * n];
        for (d, &oj) in dst.iter_mut().zip(&map) {
            *d = src[oj];
        }
    }
    Ok(out)
}

pub fn permute_subsystems(
    m: &ComplexMatrix,
    layout: &SystemLayout,
    perm: &[usize],
) -> Result<(ComplexMatrix, SystemLayout)> {
    let out = permute_positions(m, &layout.dims(), perm)?;
    Ok((out, layout.permuted(perm)?))
}

/// Permutation placing the last of `n` items first (i → i+1, n → 1).
pub fn cyclic_forward(n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    std::iter::once(n - 1).chain(0..n - 1).collect()
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (j, &p) in perm.iter().enumerate() {
        inv[p] = j;
    }
    inv
}

/// Hermitian eigendecomposition: ascending eigenvalues and the matching
/// eigenvectors as columns.
pub fn eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let h = hermitian_checked(m)?;
    let n = h.rows;
    if n == 0 {
        return Ok((Vec::new(), ComplexMatrix::zeros(0, 0)));
    }
    let (vals, vecs) = match raw_eigh(&h) {
        Some(e) => e,
        None => {
            // nalgebra's complex tridiagonalization can return NaN on some
            // sparse inputs; a diagonal phase change of basis avoids it.
            let phases = basis_phases(n);
            let rotated =
                ComplexMatrix::from_fn(n, n, |r, c| phases[r] * h[(r, c)] * phases[c].conj());
            let (vals, w) = raw_eigh(&rotated).ok_or_else(|| Error::NonConvergence {
                iterations: 0,
                detail: format!("Hermitian eigensolver returned non-finite values ({n}x{n})"),
            })?;
            (
                vals,
                ComplexMatrix::from_fn(n, n, |r, c| phases[r].conj() * w[(r, c)]),
            )
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let values = order.iter().map(|&i| vals[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    Ok((values, vectors))
}

pub fn eigvalsh(m: &ComplexMatrix) -> Result<Vec<f64>> {
    let h = hermitian_checked(m)?;
    if h.rows == 0 {
        return Ok(Vec::new());
    }
    let mut v: Vec<f64> = SymmetricEigen::new(h.to_nalgebra())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    if v.iter().any(|x| !x.is_finite()) {
        v = real_embedding_eigvals(&h)?;
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn raw_eigh(h: &ComplexMatrix) -> Option<(Vec<f64>, ComplexMatrix)> {
    let eig = SymmetricEigen::new(h.to_nalgebra());
    let finite = eig.eigenvalues.iter().all(|x| x.is_finite())
        && eig
            .eigenvectors
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite());
    finite.then(|| {
        (
            eig.eigenvalues.iter().copied().collect(),
            ComplexMatrix::from_nalgebra(&eig.eigenvectors),
        )
    })
}

fn basis_phases(n: usize) -> Vec<C64> {
    const GOLDEN: f64 = 0.618_033_988_749_894_8;
    (0..n)
        .map(|j| {
            C64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * ((j + 1) as f64 * GOLDEN).fract(),
            )
        })
        .collect()
}

/// Eigenvalues of A + iB from the real symmetric [[A, -B], [B, A]], whose
/// spectrum is that of the Hermitian matrix with every value doubled.
fn real_embedding_eigvals(h: &ComplexMatrix) -> Result<Vec<f64>> {
    let n = h.rows;
    let big = DMatrix::<f64>::from_fn(2 * n, 2 * n, |r, c| {
        let z = h[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let mut all: Vec<f64> = SymmetricEigen::new(big)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    if all.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonConvergence {
            iterations: 0,
            detail: format!("Hermitian eigensolver returned non-finite values ({n}x{n})"),
        });
    }
    all.sort_by(f64::total_cmp);
    Ok(all.into_iter().step_by(2).collect())
}

fn hermitian_checked(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    m.dim()?;
    let defect = m.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    Ok(m.hermitian_part())
}

/// Rebuild V diag(f(λ)) V†.
pub fn spectral_map(
    values: &[f64],
    vectors: &ComplexMatrix,
    f: impl Fn(f64) -> f64,
) -> ComplexMatrix {
    let n = values.len();
    let fv: Vec<f64> = values.iter().map(|&x| f(x)).collect();
    let mut out = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        if fv[k] == 0.0 {
            continue;
        }
        for r in 0..n {
            let a = vectors[(r, k)] * fv[k];
            if a == ZERO {
                continue;
            }
            for c in 0..n {
                out.data[r * n + c] += a * vectors[(c, k)].conj();
            }
        }
    }
    out
}

pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.rows == 0 || m.cols == 0 {
        return Vec::new();
    }
    SVD::new(m.to_nalgebra(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Sum of singular values. Hermitian inputs go through the eigensolver.
pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    m.dim()?;
    if m.hermitian_defect() <= HERMITIAN_TOL {
        Ok(eigvalsh(m)?.iter().map(|x| x.abs()).sum())
    } else {
        Ok(singular_values(m).iter().sum())
    }
}

/// Eigenvalues clipped at zero; anything below `-PSD_TOL` is an error.
pub fn psd_eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let (mut vals, vecs) = eigh(m)?;
    if let Some(&min) = vals.first() {
        if min < -PSD_TOL * (1.0 + vals.last().copied().unwrap_or(0.0).abs()) {
            return Err(Error::NotPsd(min));
        }
    }
    for v in &mut vals {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok((vals, vecs))
}

pub fn sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (vals, vecs) = psd_eigh(m)?;
    Ok(spectral_map(&vals, &vecs, f64::sqrt))
}

/// F(ρ,σ) = (tr √(√ρ σ √ρ))².
pub fn fidelity(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    if rho.dim()? != sigma.dim()? {
        return Err(Error::DimensionMismatch(format!(
            "fidelity between {} and {} dimensional operators",
            rho.rows, sigma.rows
        )));
    }
    let s = sqrt_psd(rho)?;
    psd_eigh(sigma)?;
    let inner = s.matmul(sigma).matmul(&s).hermitian_part();
    let vals = eigvalsh(&inner)?;
    let root: f64 = vals.iter().map(|&x| x.max(0.0).sqrt()).sum();
    Ok(root * root)
}

/// Von Neumann entropy in bits of a PSD operator (not renormalized).
pub fn entropy_bits(m: &ComplexMatrix) -> Result<f64> {
    let (vals, _) = psd_eigh(m)?;
    Ok(vals
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum())
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}
