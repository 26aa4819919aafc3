//! Finite-dimensional *-subalgebras of `M_n`, stored as Hilbert-Schmidt orthonormal bases.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::LinMap;
use crate::matrix::{herm_eig_unchecked, ComplexMatrix, C64};

/// Relative residual below which a candidate is considered already in the span.
const SPAN_TOL: f64 = 1e-8;
/// Worst tolerated deviation of the Gram matrix from the identity.
const GRAM_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlgebraJson", into = "AlgebraJson")]
pub struct StarAlgebra {
    ambient_dim: usize,
    basis: Vec<ComplexMatrix>,
}

#[derive(Serialize, Deserialize)]
struct AlgebraJson {
    ambient_dim: usize,
    basis: Vec<ComplexMatrix>,
}

impl TryFrom<AlgebraJson> for StarAlgebra {
    type Error = Error;
    fn try_from(j: AlgebraJson) -> Result<Self> {
        StarAlgebra::from_orthonormal_basis(j.ambient_dim, j.basis)
    }
}

impl From<StarAlgebra> for AlgebraJson {
    fn from(a: StarAlgebra) -> Self {
        AlgebraJson {
            ambient_dim: a.ambient_dim,
            basis: a.basis,
        }
    }
}

/// Incremental Gram-Schmidt over vectorised matrices.
struct SpanBuilder {
    n: usize,
    vecs: Vec<DVector<C64>>,
}

impl SpanBuilder {
    fn new(n: usize) -> Self {
        Self { n, vecs: Vec::new() }
    }

    fn residual(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut r = v.clone();
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for b in &self.vecs {
                let c = b.dotc(&r);
                r.axpy(-c, b, C64::new(1.0, 0.0));
            }
        }
        r
    }

    /// Adds `m` if it is not already in the span; returns the new orthonormal element.
    fn try_add(&mut self, m: &ComplexMatrix) -> Option<ComplexMatrix> {
        let v = m.vectorize();
        let norm = v.norm();
        if norm < 1e-12 || self.vecs.len() >= self.n * self.n {
            return None;
        }
        let r = self.residual(&v);
        let rn = r.norm();
        if rn <= SPAN_TOL * norm {
            return None;
        }
        let q = r / C64::new(rn, 0.0);
        let out = ComplexMatrix::unvectorize(&q, self.n, self.n);
        self.vecs.push(q);
        Some(out)
    }
}

impl StarAlgebra {
    /// Wraps an orthonormal basis; only orthonormality is validated.
    pub fn from_orthonormal_basis(ambient_dim: usize, basis: Vec<ComplexMatrix>) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::InvalidInput("ambient dimension must be positive".into()));
        }
        for b in &basis {
            if b.rows() != ambient_dim || b.cols() != ambient_dim {
                return Err(Error::DimensionMismatch(format!(
                    "basis element {}x{} in M_{ambient_dim}",
                    b.rows(),
                    b.cols()
                )));
            }
        }
        let a = Self {
            ambient_dim,
            basis: basis.into_iter().map(|b| b.without_dims()).collect(),
        };
        let g = a.gram_residual();
        if g > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "basis is not orthonormal: Gram residual {g:.3e}"
            )));
        }
        Ok(a)
    }

    /// Orthonormalises an arbitrary spanning family without closing it.
    pub fn span_of(ambient_dim: usize, elems: &[ComplexMatrix]) -> Result<Self> {
        let mut sb = SpanBuilder::new(ambient_dim);
        let mut basis = Vec::new();
        for e in elems {
            if e.rows() != ambient_dim || e.cols() != ambient_dim {
                return Err(Error::DimensionMismatch(format!(
                    "element {}x{} in M_{ambient_dim}",
                    e.rows(),
                    e.cols()
                )));
            }
            if let Some(q) = sb.try_add(e) {
                basis.push(q);
            }
        }
        Ok(Self { ambient_dim, basis })
    }

    pub fn full(n: usize) -> Self {
        let basis = (0..n)
            .flat_map(|i| (0..n).map(move |j| ComplexMatrix::unit(n, i, j)))
            .collect();
        Self {
            ambient_dim: n,
            basis,
        }
    }

    pub fn diagonal(n: usize) -> Self {
        Self {
            ambient_dim: n,
            basis: (0..n).map(|i| ComplexMatrix::unit(n, i, i)).collect(),
        }
    }

    pub fn scalars(n: usize) -> Self {
        Self {
            ambient_dim: n,
            basis: vec![ComplexMatrix::identity(n).scale_re(1.0 / (n as f64).sqrt())],
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    /// Orthogonal projection onto the span, `Σ_k Tr(b_k^* x) b_k`.
    pub fn project(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let n = self.ambient_dim;
        let mut out = ComplexMatrix::zeros(n, n);
        for b in &self.basis {
            out = out + b.scale(b.hs_inner(x));
        }
        out
    }

    /// `‖x - P(x)‖_F`.
    pub fn projection_residual(&self, x: &ComplexMatrix) -> f64 {
        (x - self.project(x)).frobenius_norm()
    }

    pub fn contains(&self, x: &ComplexMatrix, tol: f64) -> bool {
        self.projection_residual(x) <= tol * x.frobenius_norm().max(1.0)
    }

    pub fn unit_residual(&self) -> f64 {
        self.projection_residual(&ComplexMatrix::identity(self.ambient_dim))
    }

    pub fn contains_unit(&self) -> bool {
        self.unit_residual() <= 1e-8
    }

    pub fn gram_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                r = r.max((a.hs_inner(b) - C64::new(target, 0.0)).norm());
            }
        }
        r
    }

    /// Worst residual of adjoints and pairwise products outside the span.
    pub fn closure_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for a in &self.basis {
            r = r.max(self.projection_residual(&a.adjoint()));
            for b in &self.basis {
                r = r.max(self.projection_residual(&(a * b)));
            }
        }
        r
    }

    /// Worst residual of Jordan products `a∘b` of basis elements outside the span.
    pub fn jordan_closure_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for b in &self.basis[i..] {
                r = r.max(self.projection_residual(&jordan_product_unchecked(a, b)));
            }
        }
        r
    }

    pub fn commutator_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for b in &self.basis[i + 1..] {
                r = r.max(a.commutator(b).frobenius_norm());
            }
        }
        r
    }

    pub fn is_abelian(&self, tol: f64) -> bool {
        self.commutator_residual() <= tol
    }

    /// Trace-invariant conditional expectation onto the algebra: the Hilbert-Schmidt
    /// orthogonal projection, as a map `M_n -> M_n`.
    pub fn conditional_expectation(&self) -> Result<LinMap> {
        let residual = self.unit_residual();
        if residual > 1e-8 {
            return Err(Error::UnitNotInAlgebra { residual });
        }
        let n = self.ambient_dim;
        Ok(LinMap::from_fn(n, n, |x| self.project(x)))
    }

    /// Minimal projections of an abelian unital algebra, by spectral decomposition of a
    /// random self-adjoint element. Ordered lexicographically (descending) by entries.
    pub fn minimal_projections(&self) -> Result<Vec<ComplexMatrix>> {
        let comm = self.commutator_residual();
        if comm > 1e-8 {
            return Err(Error::NonAbelian { residual: comm });
        }
        let residual = self.unit_residual();
        if residual > 1e-8 {
            return Err(Error::UnitNotInAlgebra { residual });
        }
        let n = self.ambient_dim;
        let herm: Vec<ComplexMatrix> = self
            .basis
            .iter()
            .flat_map(|b| {
                let re = b.hermitian_part();
                let im = (b - &b.adjoint()).scale(C64::new(0.0, -0.5));
                [re, im]
            })
            .collect();
        for attempt in 0..10u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(0x6d70_726f_6a00 + attempt);
            let mut c = ComplexMatrix::zeros(n, n);
            for h in &herm {
                c = c + h.scale_re(rng.random_range(-1.0..1.0));
            }
            let eig = herm_eig_unchecked(c.inner());
            let scale = eig.values.iter().map(|x| x.abs()).fold(1e-300, f64::max);
            let mut projs = Vec::new();
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n && (eig.values[end - 1] - eig.values[end]).abs() <= 1e-7 * scale {
                    end += 1;
                }
                let mut p = ComplexMatrix::zeros(n, n);
                for k in start..end {
                    p = p + ComplexMatrix::outer(&eig.vector(k));
                }
                projs.push(p);
                start = end;
            }
            let ok = projs.len() == self.dim() && projs.iter().all(|p| self.projection_residual(p) <= 1e-8);
            if ok {
                projs.sort_by(lex_desc);
                return Ok(projs);
            }
        }
        Err(Error::Numerical(
            "joint eigenspaces not separated after 10 random combinations".into(),
        ))
    }

    /// Smallest *-algebra containing the generators.
    pub fn span_closure(generators: &[ComplexMatrix]) -> Result<Self> {
        let first = generators
            .first()
            .ok_or_else(|| Error::InvalidInput("span_closure needs at least one generator".into()))?;
        let n = first.rows();
        for g in generators {
            if g.rows() != n || g.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "generator {}x{} among {n}x{n} generators",
                    g.rows(),
                    g.cols()
                )));
            }
        }
        let mut sb = SpanBuilder::new(n);
        let mut basis: Vec<ComplexMatrix> = Vec::new();
        let mut queue: std::collections::VecDeque<ComplexMatrix> = generators
            .iter()
            .flat_map(|g| [g.clone().without_dims(), g.adjoint().without_dims()])
            .collect();
        while let Some(c) = queue.pop_front() {
            if basis.len() == n * n {
                break;
            }
            if let Some(q) = sb.try_add(&c) {
                queue.push_back(q.adjoint());
                for b in basis.iter().chain(std::iter::once(&q)) {
                    queue.push_back(&q * b);
                    queue.push_back(b * &q);
                }
                basis.push(q);
            }
        }
        let a = Self {
            ambient_dim: n,
            basis,
        };
        let g = a.gram_residual();
        if g > GRAM_FLOOR {
            return Err(Error::Numerical(format!(
                "Gram conditioning degraded during closure: residual {g:.3e}"
            )));
        }
        Ok(a)
    }
}

fn lex_desc(a: &ComplexMatrix, b: &ComplexMatrix) -> std::cmp::Ordering {
    for (x, y) in a.inner().transpose().iter().zip(b.inner().transpose().iter()) {
        for (p, q) in [(x.re, y.re), (x.im, y.im)] {
            if (p - q).abs() > 1e-9 {
                return q.partial_cmp(&p).unwrap();
            }
        }
    }
    std::cmp::Ordering::Equal
}

fn jordan_product_unchecked(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    (a * b + b * a).scale_re(0.5)
}

/// Jordan product `½(ab + ba)`.
pub fn jordan_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "jordan product of {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(jordan_product_unchecked(a, b))
}

/// Random element of the algebra with real Gaussian-like coefficients in `[-1, 1)`.
pub fn random_element(a: &StarAlgebra, rng: &mut impl Rng) -> ComplexMatrix {
    let n = a.ambient_dim();
    let mut x = ComplexMatrix::zeros(n, n);
    for b in a.basis() {
        let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        x = x + b.scale(c);
    }
    x
}
