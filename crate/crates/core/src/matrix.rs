//! Dense complex matrices with optional bipartite annotations.
//!
//! Index convention for a bipartite matrix with dims `(dA, dB)`: the row
//! (or column) `(i, k)` with `i < dA`, `k < dB` sits at `i * dB + k`, first
//! factor major. Every transpose is taken in the standard basis.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default tolerance for self-adjointness and positivity checks.
pub const DEFAULT_TOL: f64 = 1e-9;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Which tensor factor an operation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct ComplexMatrix {
    inner: DMatrix<C64>,
    dims: Option<(usize, usize)>,
}

/// Wire format: `{"rows", "cols", "dims": [dA, dB] | null, "data": [[re, im], ...]}`, row-major.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    dims: Option<[usize; 2]>,
    data: Vec<[f64; 2]>,
}

impl TryFrom<MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.rows == 0 || j.cols == 0 {
            return Err(Error::InvalidInput("rows and cols must be at least 1".into()));
        }
        if j.data.len() != j.rows * j.cols {
            return Err(Error::InvalidInput(format!(
                "entry count {} does not equal rows*cols = {}",
                j.data.len(),
                j.rows * j.cols
            )));
        }
        let entries = j.data.iter().map(|&[re, im]| C64::new(re, im));
        let m = ComplexMatrix::from_dmatrix(DMatrix::from_row_iterator(j.rows, j.cols, entries));
        match j.dims {
            Some([a, b]) => m.with_dims(a, b),
            None => Ok(m),
        }
    }
}

impl From<ComplexMatrix> for MatrixJson {
    fn from(m: ComplexMatrix) -> Self {
        let (rows, cols) = m.inner.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let z = m.inner[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        MatrixJson {
            rows,
            cols,
            dims: m.dims.map(|(a, b)| [a, b]),
            data,
        }
    }
}

impl ComplexMatrix {
    pub fn from_dmatrix(inner: DMatrix<C64>) -> Self {
        Self { inner, dims: None }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, entries)))
    }

    pub fn from_real_rows(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_slice(rows, cols, &c)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::from_dmatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_dmatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_dmatrix(DMatrix::identity(n, n))
    }

    /// Matrix unit `E_ij` in `M_n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        m[(i, j)] = ONE;
        Self::from_dmatrix(m)
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO })
    }

    /// Rank-one projector `|v><v|` (not normalised).
    pub fn outer(v: &DVector<C64>) -> Self {
        Self::from_dmatrix(v * v.adjoint())
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn pauli_y() -> Self {
        let i = C64::new(0.0, 1.0);
        Self::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::diag(&[1.0, -1.0])
    }

    /// Attaches a bipartite annotation; requires a square matrix with `rows = a * b`.
    pub fn with_dims(mut self, a: usize, b: usize) -> Result<Self> {
        let (r, c) = self.inner.shape();
        if r != c {
            return Err(Error::NotSquare { rows: r, cols: c });
        }
        if a == 0 || b == 0 || a * b != r {
            return Err(Error::InvalidDims(a, b, r));
        }
        self.dims = Some((a, b));
        Ok(self)
    }

    pub fn without_dims(mut self) -> Self {
        self.dims = None;
        self
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.inner
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.inner[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.inner[(i, j)] = z;
    }

    fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows())
        } else {
            Err(Error::NotSquare {
                rows: self.rows(),
                cols: self.cols(),
            })
        }
    }

    fn require_dims(&self) -> Result<(usize, usize)> {
        self.dims.ok_or(Error::MissingDims)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            inner: self.inner.adjoint(),
            dims: self.dims,
        }
    }

    /// Entrywise transpose without conjugation. Keeps the bipartite annotation.
    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose(),
            dims: self.dims,
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            inner: self.inner.map(|z| z.conj()),
            dims: self.dims,
        }
    }

    /// Counting trace: 1 on every minimal projection.
    pub fn trace(&self) -> C64 {
        self.inner.trace()
    }

    /// Trace normalised so that the identity has trace one.
    pub fn normalized_trace(&self) -> C64 {
        self.inner.trace() / self.rows() as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hilbert-Schmidt inner product `Tr(self^* other)`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.inner.dotc(&other.inner)
    }

    /// `Tr(self other)`.
    pub fn trace_product(&self, other: &Self) -> C64 {
        self.inner.transpose().dot(&other.inner)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            inner: &self.inner * s,
            dims: self.dims,
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `max |x_ij - conj(x_ji)|`.
    pub fn self_adjoint_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                r = r.max((self.inner[(i, j)] - self.inner[(j, i)].conj()).norm());
            }
        }
        r
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.self_adjoint_residual() <= tol
    }

    /// `(x + x^*) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self {
            inner: (&self.inner + self.inner.adjoint()) * C64::new(0.5, 0.0),
            dims: self.dims,
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self * other - other * self
    }

    /// Row-major vectorisation, `vec(x)[i * cols + j] = x_ij`.
    pub fn vectorize(&self) -> DVector<C64> {
        let (r, c) = self.inner.shape();
        DVector::from_fn(r * c, |k, _| self.inner[(k / c, k % c)])
    }

    pub fn unvectorize(v: &DVector<C64>, rows: usize, cols: usize) -> Self {
        debug_assert_eq!(v.len(), rows * cols);
        Self::from_fn(rows, cols, |i, j| v[i * cols + j])
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.inner.shape() == other.inner.shape() && (self - other).max_abs() <= tol
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            inner: &self.inner + &rhs.inner,
            dims: self.dims,
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            inner: &self.inner - &rhs.inner,
            dims: self.dims,
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let dims = if self.dims == rhs.dims { self.dims } else { None };
        ComplexMatrix {
            inner: &self.inner * &rhs.inner,
            dims,
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix {
            inner: -&self.inner,
            dims: self.dims,
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $f(self, rhs: ComplexMatrix) -> ComplexMatrix {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $f(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                (&self).$f(rhs)
            }
        }
        impl $tr<ComplexMatrix> for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $f(self, rhs: ComplexMatrix) -> ComplexMatrix {
                self.$f(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Kronecker product, first factor major. Square factors yield a bipartite annotation.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let inner = a.inner.kronecker(&b.inner);
    let dims = (a.is_square() && b.is_square()).then(|| (a.rows(), b.rows()));
    ComplexMatrix { inner, dims }
}

/// Transpose with respect to the standard basis.
pub fn transpose_in_basis(b: &ComplexMatrix) -> Result<ComplexMatrix> {
    b.require_square()?;
    Ok(b.transpose())
}

/// Traces out the named factor. The result carries no annotation.
pub fn partial_trace(x: &ComplexMatrix, which: Subsystem) -> Result<ComplexMatrix> {
    let (da, db) = x.require_dims()?;
    let m = &x.inner;
    Ok(match which {
        Subsystem::B => ComplexMatrix::from_fn(da, da, |i, j| {
            (0..db).map(|k| m[(i * db + k, j * db + k)]).sum()
        }),
        Subsystem::A => ComplexMatrix::from_fn(db, db, |k, l| {
            (0..da).map(|i| m[(i * db + k, i * db + l)]).sum()
        }),
    })
}

/// Transposes the named factor blockwise.
pub fn partial_transpose(x: &ComplexMatrix, which: Subsystem) -> Result<ComplexMatrix> {
    let (da, db) = x.require_dims()?;
    let m = &x.inner;
    let n = da * db;
    let inner = DMatrix::from_fn(n, n, |r, c| {
        let (i, k) = (r / db, r % db);
        let (j, l) = (c / db, c % db);
        match which {
            Subsystem::B => m[(i * db + l, j * db + k)],
            Subsystem::A => m[(j * db + k, i * db + l)],
        }
    });
    Ok(ComplexMatrix {
        inner,
        dims: Some((da, db)),
    })
}

/// Realigned matrix `R[(i,j),(k,l)] = x[(i,k),(j,l)]`, of shape `dA^2 x dB^2`.
pub fn realign(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (da, db) = x.require_dims()?;
    let m = &x.inner;
    Ok(ComplexMatrix::from_fn(da * da, db * db, |r, c| {
        let (i, j) = (r / da, r % da);
        let (k, l) = (c / db, c % db);
        m[(i * db + k, j * db + l)]
    }))
}

/// Eigendecomposition of a self-adjoint matrix.
#[derive(Clone, Debug)]
pub struct HermEig {
    /// Descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<C64>,
}

impl HermEig {
    pub fn min(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn vector(&self, k: usize) -> DVector<C64> {
        self.vectors.column(k).into_owned()
    }

    /// Rebuilds `f(x) = U diag(f(λ)) U^*`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(k).scale_mut(s);
        }
        ComplexMatrix::from_dmatrix(&scaled * self.vectors.adjoint())
    }
}

/// Hermitian eigendecomposition with descending eigenvalues.
///
/// Eigenvectors are phase-normalised so that their first non-negligible entry is real
/// positive; numerically equal eigenvalues are ordered lexicographically by the
/// normalised eigenvector entries.
pub fn herm_eig(x: &ComplexMatrix) -> Result<HermEig> {
    herm_eig_tol(x, DEFAULT_TOL)
}

pub fn herm_eig_tol(x: &ComplexMatrix, tol: f64) -> Result<HermEig> {
    x.require_square()?;
    let scale = x.max_abs().max(1.0);
    let residual = x.self_adjoint_residual();
    if residual > tol * scale {
        return Err(Error::NotSelfAdjoint { residual, tol });
    }
    Ok(herm_eig_unchecked(&x.hermitian_part().inner))
}

/// nalgebra's solver can return NaN on some exactly structured inputs (for instance the
/// 64x64 Choi matrix of the identity map). Those are retried on a conjugate `U m U*` by a
/// fixed seeded unitary, with eigenvectors rotated back.
fn symmetric_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let finite = |e: &nalgebra::SymmetricEigen<C64, nalgebra::Dyn>| {
        e.eigenvalues.iter().all(|x| x.is_finite()) && e.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    };
    if finite(&eig) {
        return (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors);
    }
    for seed in 0..4u64 {
        let u = crate::random::unitary(m.nrows(), &mut crate::random::rng_from_seed(0x5eed + seed)).into_inner();
        let rotated = &u * m * u.adjoint();
        let rotated = (&rotated + rotated.adjoint()) * C64::new(0.5, 0.0);
        let e = nalgebra::SymmetricEigen::new(rotated);
        if finite(&e) {
            return (e.eigenvalues.iter().copied().collect(), u.adjoint() * e.eigenvectors);
        }
    }
    panic!("symmetric eigensolver produced non-finite output");
}

pub(crate) fn herm_eig_unchecked(m: &DMatrix<C64>) -> HermEig {
    let n = m.nrows();
    let (values, vectors) = symmetric_eigen(m);
    let mut cols: Vec<(f64, DVector<C64>)> = (0..n)
        .map(|k| {
            let mut v = vectors.column(k).into_owned();
            normalize_phase(&mut v);
            (values[k], v)
        })
        .collect();
    let scale = cols.iter().map(|c| c.0.abs()).fold(1.0, f64::max);
    let tie = 1e-12 * scale;
    // descending values; runs of near-equal values ordered by their vectors
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && cols[end - 1].0 - cols[end].0 <= tie {
            end += 1;
        }
        cols[start..end].sort_by(|a, b| lex_cmp(&a.1, &b.1));
        start = end;
    }
    let values = cols.iter().map(|c| c.0).collect();
    let vectors = DMatrix::from_fn(n, n, |i, k| cols[k].1[i]);
    HermEig { values, vectors }
}

fn normalize_phase(v: &mut DVector<C64>) {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-8 * peak).copied() {
        let phase = z.conj() / z.norm();
        for e in v.iter_mut() {
            *e *= phase;
        }
    }
}

fn lex_cmp(a: &DVector<C64>, b: &DVector<C64>) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .flat_map(|(x, y)| [(x.re, y.re), (x.im, y.im)])
        .map(|(p, q)| p.total_cmp(&q))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

pub fn min_eigenvalue(x: &ComplexMatrix) -> Result<f64> {
    Ok(herm_eig(x)?.min())
}

/// `λ_min(x) >= -tol`.
pub fn is_psd(x: &ComplexMatrix, tol: f64) -> Result<bool> {
    Ok(herm_eig_tol(x, tol.max(DEFAULT_TOL))?.min() >= -tol)
}

/// Principal square root of a PSD matrix (negative eigenvalues clipped).
pub fn sqrt_psd(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(herm_eig(x)?.map_values(|l| l.max(0.0).sqrt()))
}

/// Inverse square root of a positive definite matrix.
pub fn inv_sqrt_pd(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let e = herm_eig(x)?;
    let floor = 1e-13 * e.max().abs().max(1.0);
    if e.min() <= floor {
        return Err(Error::Numerical(format!(
            "inverse square root of a singular matrix (minimal eigenvalue {:.3e})",
            e.min()
        )));
    }
    Ok(e.map_values(|l| 1.0 / l.sqrt()))
}

/// Orthonormal basis of the null space of `m`: right singular vectors whose singular
/// value is at most `rel_tol * max(σ_max, 1)`. The floor of 1 treats operators whose
/// entries are all rounding noise as zero; callers pass operators of unit scale.
pub(crate) fn null_space(m: &DMatrix<C64>, rel_tol: f64) -> Vec<DVector<C64>> {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = nalgebra::SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = rel_tol * smax.max(1.0);
    (0..c)
        .filter(|&k| svd.singular_values[k] <= cut)
        .map(|k| v_t.row(k).adjoint())
        .collect()
}

/// Numerical rank: number of singular values above `rel_tol * σ_max`.
pub(crate) fn numerical_rank(m: &DMatrix<C64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = m.singular_values();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax < 1e-14 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * smax).count()
}

/// Stacks vectorised matrices as the columns of one matrix.
pub(crate) fn stack_columns(ms: &[ComplexMatrix]) -> DMatrix<C64> {
    let len = ms.first().map(|m| m.rows() * m.cols()).unwrap_or(0);
    let mut out = DMatrix::zeros(len, ms.len());
    for (k, m) in ms.iter().enumerate() {
        out.set_column(k, &m.vectorize());
    }
    out
}
