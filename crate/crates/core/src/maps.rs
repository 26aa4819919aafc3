//! Linear maps between matrix algebras, stored as Choi matrices.
//!
//! A map `φ: M_n -> M_m` is represented by `C_φ = Σ_ij E_ij ⊗ φ(E_ij)`, an `nm x nm`
//! matrix with dims `(n, m)`; the input factor comes first. Then
//!
//! * `φ(a) = Tr_A((aᵗ ⊗ I) C_φ)`,
//! * `φ` is completely positive iff `C_φ ≥ 0`,
//! * `φ` is positive iff `<u⊗v| C_φ |u⊗v> ≥ 0` for all unit `u, v`,
//! * the dual functional `φ̃(a⊗b) = Tr(φ(a) bᵗ)` has density `C_φᵗ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    herm_eig, herm_eig_unchecked, inv_sqrt_pd, is_psd, partial_trace, tensor, ComplexMatrix, Subsystem, C64,
    DEFAULT_TOL, ONE, ZERO,
};
use crate::product_opt;
use crate::random::{self, rng_from_seed};
use crate::separability::{SepOracle, SepVerdict};

/// Kraus rank cut-off on Choi eigenvalues.
pub const KRAUS_RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinMapJson", into = "LinMapJson")]
pub struct LinMap {
    dim_in: usize,
    dim_out: usize,
    choi: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
struct LinMapJson {
    dim_in: usize,
    dim_out: usize,
    choi: ComplexMatrix,
}

impl TryFrom<LinMapJson> for LinMap {
    type Error = Error;
    fn try_from(j: LinMapJson) -> Result<Self> {
        LinMap::from_choi(j.dim_in, j.dim_out, j.choi)
    }
}

impl From<LinMap> for LinMapJson {
    fn from(m: LinMap) -> Self {
        LinMapJson {
            dim_in: m.dim_in,
            dim_out: m.dim_out,
            choi: m.choi,
        }
    }
}

impl LinMap {
    pub fn from_choi(dim_in: usize, dim_out: usize, choi: ComplexMatrix) -> Result<Self> {
        let n = dim_in * dim_out;
        if dim_in == 0 || dim_out == 0 || choi.rows() != n || choi.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix {}x{} for a map M_{dim_in} -> M_{dim_out}",
                choi.rows(),
                choi.cols()
            )));
        }
        Ok(Self {
            dim_in,
            dim_out,
            choi: choi.with_dims(dim_in, dim_out)?,
        })
    }

    /// Builds the map from its action on matrix units.
    pub fn from_fn(dim_in: usize, dim_out: usize, mut f: impl FnMut(&ComplexMatrix) -> ComplexMatrix) -> Self {
        let n = dim_in;
        let m = dim_out;
        let mut c = DMatrix::from_element(n * m, n * m, ZERO);
        for i in 0..n {
            for j in 0..n {
                let img = f(&ComplexMatrix::unit(n, i, j));
                assert_eq!((img.rows(), img.cols()), (m, m), "image has wrong shape");
                for k in 0..m {
                    for l in 0..m {
                        c[(i * m + k, j * m + l)] = img.get(k, l);
                    }
                }
            }
        }
        Self {
            dim_in,
            dim_out,
            choi: ComplexMatrix::from_dmatrix(c).with_dims(n, m).unwrap(),
        }
    }

    /// `x ↦ Σ K x K^*` with each `K` of shape `m x n`.
    pub fn from_kraus(kraus: &[ComplexMatrix]) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidInput("at least one Kraus operator required".into()))?;
        let (m, n) = (first.rows(), first.cols());
        if kraus.iter().any(|k| k.rows() != m || k.cols() != n) {
            return Err(Error::DimensionMismatch("Kraus operators of different shapes".into()));
        }
        // C = Σ_k |w_k><w_k| with w_k[(i, a)] = K_k[a, i]
        let mut c = DMatrix::from_element(n * m, n * m, ZERO);
        for k in kraus {
            let w = DVector::from_fn(n * m, |r, _| k.get(r % m, r / m));
            c += &w * w.adjoint();
        }
        Self::from_choi(n, m, ComplexMatrix::from_dmatrix(c))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |x| x.clone())
    }

    pub fn transpose_map(n: usize) -> Self {
        Self::from_fn(n, n, |x| x.transpose())
    }

    /// `x ↦ (Tr(x)/n) I`.
    pub fn completely_depolarizing(n: usize) -> Self {
        Self::from_fn(n, n, |x| ComplexMatrix::identity(n).scale(x.trace() / n as f64))
    }

    /// `x ↦ Tr(x) I_m` on `M_n`.
    pub fn trace_times_identity(n: usize, m: usize) -> Self {
        Self::from_fn(n, m, |x| ComplexMatrix::identity(m).scale(x.trace()))
    }

    /// `x ↦ U x U^*`.
    pub fn conjugation(u: &ComplexMatrix) -> Self {
        Self::from_kraus(std::slice::from_ref(u)).expect("single Kraus operator")
    }

    /// `x ↦ Σ_i E_ii x E_ii`.
    pub fn pinching(n: usize) -> Self {
        Self::from_fn(n, n, |x| ComplexMatrix::from_fn(n, n, |i, j| if i == j { x.get(i, i) } else { ZERO }))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn apply(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        if a.rows() != self.dim_in || a.cols() != self.dim_in {
            return Err(Error::DimensionMismatch(format!(
                "input {}x{} for a map on M_{}",
                a.rows(),
                a.cols(),
                self.dim_in
            )));
        }
        Ok(self.apply_unchecked(a))
    }

    pub(crate) fn apply_unchecked(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let (n, m) = (self.dim_in, self.dim_out);
        let c = self.choi.inner();
        let mut out = DMatrix::from_element(m, m, ZERO);
        for i in 0..n {
            for j in 0..n {
                let aij = a.get(i, j);
                if aij == ZERO {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        out[(k, l)] += aij * c[(i * m + k, j * m + l)];
                    }
                }
            }
        }
        ComplexMatrix::from_dmatrix(out)
    }

    /// The defining formula `Tr_A((aᵗ ⊗ I) C)`; slower, kept as an independent route.
    pub fn apply_via_partial_trace(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        let lifted = tensor(&a.transpose().without_dims(), &ComplexMatrix::identity(self.dim_out));
        partial_trace(&(lifted * &self.choi), Subsystem::A)
    }

    /// Matrix `S` with `vec(φ(x)) = S vec(x)` (row-major vectorisation), shape `m² x n²`.
    pub fn superoperator(&self) -> DMatrix<C64> {
        let (n, m) = (self.dim_in, self.dim_out);
        let c = self.choi.inner();
        DMatrix::from_fn(m * m, n * n, |r, s| {
            let (k, l) = (r / m, r % m);
            let (i, j) = (s / n, s % n);
            c[(i * m + k, j * m + l)]
        })
    }

    pub fn from_superoperator(dim_in: usize, dim_out: usize, s: &DMatrix<C64>) -> Result<Self> {
        let (n, m) = (dim_in, dim_out);
        if s.shape() != (m * m, n * n) {
            return Err(Error::DimensionMismatch(format!(
                "superoperator {:?} for a map M_{n} -> M_{m}",
                s.shape()
            )));
        }
        let c = ComplexMatrix::from_fn(n * m, n * m, |r, q| {
            let (i, k) = (r / m, r % m);
            let (j, l) = (q / m, q % m);
            s[(k * m + l, i * n + j)]
        });
        Self::from_choi(n, m, c)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &LinMap) -> Result<LinMap> {
        if inner.dim_out != self.dim_in {
            return Err(Error::DimensionMismatch(format!(
                "composing M_{} -> M_{} after M_{} -> M_{}",
                self.dim_in, self.dim_out, inner.dim_in, inner.dim_out
            )));
        }
        Ok(LinMap::from_fn(inner.dim_in, self.dim_out, |x| {
            self.apply_unchecked(&inner.apply_unchecked(x))
        }))
    }

    pub fn add(&self, other: &LinMap) -> Result<LinMap> {
        if (self.dim_in, self.dim_out) != (other.dim_in, other.dim_out) {
            return Err(Error::DimensionMismatch("adding maps of different shapes".into()));
        }
        LinMap::from_choi(self.dim_in, self.dim_out, &self.choi + &other.choi)
    }

    pub fn scale(&self, s: f64) -> LinMap {
        Self {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            choi: self.choi.scale_re(s),
        }
    }

    /// The map `η*` with `Tr(η(x) y) = Tr(x η*(y))`.
    pub fn adjoint_map(&self) -> LinMap {
        let (n, m) = (self.dim_in, self.dim_out);
        let c = self.choi.inner();
        // C*[(k,i),(l,j)] = C[(j,l),(i,k)]
        let adj = ComplexMatrix::from_fn(m * n, m * n, |r, q| {
            let (k, i) = (r / n, r % n);
            let (l, j) = (q / n, q % n);
            c[(j * m + l, i * m + k)]
        });
        LinMap::from_choi(m, n, adj).expect("shape preserved")
    }

    /// `(ι ⊗ φ)(x)` for `x` with dims `(d, n)`; the result has dims `(d, m)`.
    pub fn ampliate_right(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (d, b) = x.dims().ok_or(Error::MissingDims)?;
        if b != self.dim_in {
            return Err(Error::DimensionMismatch(format!(
                "(ι⊗φ) with φ on M_{} applied to dims ({d}, {b})",
                self.dim_in
            )));
        }
        let (n, m) = (self.dim_in, self.dim_out);
        let mut out = DMatrix::from_element(d * m, d * m, ZERO);
        for i in 0..d {
            for j in 0..d {
                let block = ComplexMatrix::from_fn(n, n, |k, l| x.get(i * n + k, j * n + l));
                let img = self.apply_unchecked(&block);
                for k in 0..m {
                    for l in 0..m {
                        out[(i * m + k, j * m + l)] = img.get(k, l);
                    }
                }
            }
        }
        ComplexMatrix::from_dmatrix(out).with_dims(d, m)
    }

    /// `(φ ⊗ ι)(x)` for `x` with dims `(n, d)`; the result has dims `(m, d)`.
    pub fn ampliate_left(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (a, d) = x.dims().ok_or(Error::MissingDims)?;
        if a != self.dim_in {
            return Err(Error::DimensionMismatch(format!(
                "(φ⊗ι) with φ on M_{} applied to dims ({a}, {d})",
                self.dim_in
            )));
        }
        let (n, m) = (self.dim_in, self.dim_out);
        let mut out = DMatrix::from_element(m * d, m * d, ZERO);
        for k in 0..d {
            for l in 0..d {
                let block = ComplexMatrix::from_fn(n, n, |i, j| x.get(i * d + k, j * d + l));
                let img = self.apply_unchecked(&block);
                for i in 0..m {
                    for j in 0..m {
                        out[(i * d + k, j * d + l)] = img.get(i, j);
                    }
                }
            }
        }
        ComplexMatrix::from_dmatrix(out).with_dims(m, d)
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        herm_eig_unchecked(&self.choi.hermitian_part().into_inner()).min()
    }

    pub fn is_hermitian_preserving(&self, tol: f64) -> bool {
        self.choi.is_self_adjoint(tol)
    }

    /// Choi criterion.
    pub fn is_cp(&self, tol: f64) -> bool {
        self.is_hermitian_preserving(tol) && self.choi_min_eigenvalue() >= -tol
    }

    /// `‖φ(I) - I‖_F`.
    pub fn unital_residual(&self) -> f64 {
        if self.dim_in != self.dim_out {
            return f64::INFINITY;
        }
        let img = self.apply_unchecked(&ComplexMatrix::identity(self.dim_in));
        (img - ComplexMatrix::identity(self.dim_out)).frobenius_norm()
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        self.unital_residual() <= tol
    }

    /// `max_x |Tr φ(E_ij) - δ_ij|`.
    pub fn trace_preserving_residual(&self) -> f64 {
        let a = partial_trace(&self.choi, Subsystem::B).expect("choi carries dims");
        (a - ComplexMatrix::identity(self.dim_in)).max_abs()
    }

    /// Heuristic block-positivity test; see [`PositivityOptions`].
    pub fn is_positive(&self, opts: &PositivityOptions) -> PositivityVerdict {
        let mut rng = rng_from_seed(opts.seed);
        let g = self.choi.hermitian_part().into_inner();
        let r = product_opt::minimize(&g, self.dim_in, self.dim_out, opts.restarts.max(1), opts.sweeps, &[], &mut rng);
        if r.value < -opts.tol {
            // <u⊗v|C|u⊗v> = <v| φ(|ū><ū|) |v>
            let input = r.u.map(|z| z.conj());
            PositivityVerdict::CertifiedNotPositive {
                input: vec_to_pairs(&input),
                output: vec_to_pairs(&r.v),
                value: r.value,
            }
        } else {
            PositivityVerdict::ProbablyPositive {
                best_value: r.value,
                restarts: opts.restarts,
            }
        }
    }

    /// Kraus operators `K_k` (shape `m x n`) from the Choi eigendecomposition, keeping
    /// eigenvalues above `KRAUS_RANK_TOL`.
    pub fn kraus(&self) -> Result<Vec<ComplexMatrix>> {
        let min = self.choi_min_eigenvalue();
        if !self.is_hermitian_preserving(DEFAULT_TOL) || min < -DEFAULT_TOL {
            return Err(Error::NotCompletelyPositive { min_eig: min });
        }
        let (n, m) = (self.dim_in, self.dim_out);
        let e = herm_eig(&self.choi.hermitian_part())?;
        Ok(e.values
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > KRAUS_RANK_TOL)
            .map(|(k, &l)| {
                let w = e.vector(k);
                let s = l.sqrt();
                ComplexMatrix::from_fn(m, n, |a, i| w[i * m + a] * s)
            })
            .collect())
    }

    /// Stinespring dilation of a unital completely positive map.
    pub fn stinespring(&self) -> Result<StinespringData> {
        if self.dim_in == 0 {
            unreachable!()
        }
        let kraus = self.kraus()?;
        let residual = self.unital_residual();
        if residual > 1e-8 {
            return Err(Error::NotUnital { residual });
        }
        StinespringData::from_kraus(self.dim_in, self.dim_out, kraus)
    }

    /// `x ↦ S^{-1/2} φ(x) S^{-1/2}` with `S = φ(I)`; positivity is preserved.
    pub fn unitalized(&self) -> Result<LinMap> {
        let s = self.apply_unchecked(&ComplexMatrix::identity(self.dim_in)).hermitian_part();
        let w = inv_sqrt_pd(&s)?;
        Ok(LinMap::from_fn(self.dim_in, self.dim_out, |x| &w * self.apply_unchecked(x) * &w))
    }

    /// Entanglement breaking iff the dual functional is separable.
    pub fn is_eb(&self, oracle: &SepOracle) -> Result<SepVerdict> {
        oracle.classify(&self.dual_functional())
    }

    /// Dual functional `φ̃(a⊗b) = Tr(φ(a) bᵗ)`; its density is `C_φᵗ`.
    pub fn dual_functional(&self) -> Functional {
        Functional {
            dims: FunctionalDims::Bipartite(self.dim_in, self.dim_out),
            density: self.choi.transpose(),
        }
    }
}

fn vec_to_pairs(v: &DVector<C64>) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PositivityOptions {
    pub restarts: usize,
    pub sweeps: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PositivityOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            sweeps: 200,
            tol: DEFAULT_TOL,
            seed: 0,
        }
    }
}

/// One-sided verdict of the block-positivity search.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "verdict")]
pub enum PositivityVerdict {
    /// `<output| φ(|input><input|) |output> = value < 0`.
    CertifiedNotPositive {
        input: Vec<[f64; 2]>,
        output: Vec<[f64; 2]>,
        value: f64,
    },
    /// No violation found; not a proof of positivity.
    ProbablyPositive { best_value: f64, restarts: usize },
}

impl PositivityVerdict {
    pub fn is_probably_positive(&self) -> bool {
        matches!(self, PositivityVerdict::ProbablyPositive { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionalDims {
    Bipartite(usize, usize),
    Single(usize),
}

/// Linear functional `λ(x) = Tr(D x)` under the counting trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FunctionalJson", into = "FunctionalJson")]
pub struct Functional {
    dims: FunctionalDims,
    density: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
struct FunctionalJson {
    dims: Vec<usize>,
    density: ComplexMatrix,
}

impl TryFrom<FunctionalJson> for Functional {
    type Error = Error;
    fn try_from(j: FunctionalJson) -> Result<Self> {
        match j.dims.as_slice() {
            [n, m] => Functional::bipartite(j.density, *n, *m),
            [n] => Functional::single(j.density.without_dims(), *n),
            _ => Err(Error::InvalidInput("functional dims must be [n] or [n, m]".into())),
        }
    }
}

impl From<Functional> for FunctionalJson {
    fn from(f: Functional) -> Self {
        let dims = match f.dims {
            FunctionalDims::Bipartite(n, m) => vec![n, m],
            FunctionalDims::Single(n) => vec![n],
        };
        FunctionalJson { dims, density: f.density }
    }
}

impl Functional {
    pub fn bipartite(density: ComplexMatrix, n: usize, m: usize) -> Result<Self> {
        let density = density.with_dims(n, m)?;
        Ok(Self {
            dims: FunctionalDims::Bipartite(n, m),
            density,
        })
    }

    pub fn single(density: ComplexMatrix, n: usize) -> Result<Self> {
        if density.rows() != n || density.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "density {}x{} for a functional on M_{n}",
                density.rows(),
                density.cols()
            )));
        }
        Ok(Self {
            dims: FunctionalDims::Single(n),
            density,
        })
    }

    /// Normalised counting trace on `M_n`.
    pub fn normalized_trace(n: usize) -> Self {
        Self::single(ComplexMatrix::identity(n).scale_re(1.0 / n as f64), n).unwrap()
    }

    pub fn dims(&self) -> &FunctionalDims {
        &self.dims
    }

    pub fn bipartite_dims(&self) -> Option<(usize, usize)> {
        match self.dims {
            FunctionalDims::Bipartite(n, m) => Some((n, m)),
            FunctionalDims::Single(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.density.rows()
    }

    pub fn density(&self) -> &ComplexMatrix {
        &self.density
    }

    pub fn eval(&self, x: &ComplexMatrix) -> C64 {
        // Tr(D x) = Σ_ab D_ab x_ba
        let d = self.density.inner();
        let x = x.inner();
        let n = d.nrows();
        let mut s = ZERO;
        for a in 0..n {
            for b in 0..n {
                s += d[(a, b)] * x[(b, a)];
            }
        }
        s
    }

    pub fn is_positive(&self, tol: f64) -> Result<bool> {
        is_psd(&self.density, tol)
    }

    pub fn is_state(&self, tol: f64) -> Result<bool> {
        Ok((self.density.trace() - ONE).norm() <= tol && self.is_positive(tol)?)
    }

    /// `Tr(x*y)`-style transposition of the density; separability is preserved.
    pub fn transposed(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            density: self.density.transpose(),
        }
    }
}

/// Stinespring data `φ(a) = V^* (a ⊗ I_r) V` with `V: C^m -> C^n ⊗ C^r`.
#[derive(Clone, Debug)]
pub struct StinespringData {
    pub dim_in: usize,
    pub dim_out: usize,
    pub rank: usize,
    /// Shape `(n r) x m`.
    pub v: ComplexMatrix,
    /// `V V^*`.
    pub p: ComplexMatrix,
    pub kraus: Vec<ComplexMatrix>,
}

impl StinespringData {
    fn from_kraus(n: usize, m: usize, kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let r = kraus.len();
        if r == 0 {
            return Err(Error::Numerical("zero map has no Stinespring dilation".into()));
        }
        // V h = Σ_k (K_k^* h) ⊗ e_k
        let v = ComplexMatrix::from_fn(n * r, m, |row, h| {
            let (i, k) = (row / r, row % r);
            kraus[k].get(h, i).conj()
        });
        let p = &v * &v.adjoint();
        Ok(Self {
            dim_in: n,
            dim_out: m,
            rank: r,
            v,
            p,
            kraus,
        })
    }

    /// `π(a) = a ⊗ I_r`.
    pub fn pi(&self, a: &ComplexMatrix) -> ComplexMatrix {
        tensor(a, &ComplexMatrix::identity(self.rank))
    }

    pub fn reconstruct(&self, a: &ComplexMatrix) -> ComplexMatrix {
        self.v.adjoint() * self.pi(a) * &self.v
    }

    /// `‖V^*V - I‖_F`.
    pub fn isometry_residual(&self) -> f64 {
        (self.v.adjoint() * &self.v - ComplexMatrix::identity(self.dim_out)).frobenius_norm()
    }

    /// `‖p π(x) - π(x) p‖_F`.
    pub fn commutation_residual(&self, x: &ComplexMatrix) -> f64 {
        self.p.commutator(&self.pi(x)).frobenius_norm()
    }
}

/// Entanglement-breaking map together with the terms `(d_i, a_i)` of its
/// measure-and-prepare form `φ(x) = Σ Tr(d_i x) a_i`.
#[derive(Clone, Debug)]
pub struct EbMap {
    pub map: LinMap,
    pub terms: Vec<(ComplexMatrix, ComplexMatrix)>,
}

impl EbMap {
    fn from_terms(n: usize, m: usize, terms: Vec<(ComplexMatrix, ComplexMatrix)>) -> Self {
        let map = LinMap::from_fn(n, m, |x| {
            let mut out = ComplexMatrix::zeros(m, m);
            for (d, a) in &terms {
                out = out + a.scale(Functional::single(d.clone(), n).unwrap().eval(x));
            }
            out
        });
        Self { map, terms }
    }

    /// Product form of the Choi matrix, `C = Σ d_iᵗ ⊗ a_i`.
    pub fn choi_terms(&self) -> Vec<(ComplexMatrix, ComplexMatrix)> {
        self.terms.iter().map(|(d, a)| (d.transpose(), a.clone())).collect()
    }
}

/// Seeded generators for the standard classes of positive maps.
pub mod generators {
    use super::*;

    fn ginibre_kraus(n: usize, m: usize, size: usize, rng: &mut impl Rng) -> Vec<ComplexMatrix> {
        let s = 1.0 / ((n * size.max(1)) as f64).sqrt();
        (0..size.max(1)).map(|_| random::ginibre(m, n, rng).scale_re(s)).collect()
    }

    /// Completely positive map with `size` Ginibre Kraus operators.
    pub fn random_cp(seed: u64, n: usize, m: usize, size: usize) -> LinMap {
        let mut rng = rng_from_seed(seed);
        LinMap::from_kraus(&ginibre_kraus(n, m, size, &mut rng)).unwrap()
    }

    /// Unital completely positive map: `K_k <- S^{-1/2} K_k` with `S = Σ K_k K_k^*`.
    pub fn random_unital_cp(seed: u64, n: usize, size: usize) -> LinMap {
        let mut rng = rng_from_seed(seed);
        let kraus = ginibre_kraus(n, n, size, &mut rng);
        let mut s = ComplexMatrix::zeros(n, n);
        for k in &kraus {
            s = s + k * &k.adjoint();
        }
        let w = inv_sqrt_pd(&s).expect("Ginibre sum is positive definite almost surely");
        let kraus: Vec<_> = kraus.iter().map(|k| &w * k).collect();
        LinMap::from_kraus(&kraus).unwrap()
    }

    /// Measure-and-prepare map `Σ ω_i(x) a_i` with random states `ω_i` and random
    /// PSD `a_i`; with `unital` the `a_i` are rescaled so that `Σ a_i = I`.
    pub fn random_eb(seed: u64, n: usize, m: usize, size: usize, unital: bool) -> EbMap {
        let mut rng = rng_from_seed(seed);
        let size = size.max(1);
        let states: Vec<_> = (0..size).map(|_| random::density(n, n, &mut rng)).collect();
        let mut outs: Vec<_> = (0..size)
            .map(|_| {
                let rank = rng.random_range(1..=m);
                random::psd(m, rank, &mut rng).scale_re(1.0 / m as f64)
            })
            .collect();
        if unital {
            assert_eq!(n, m, "unital EB maps need dim_in = dim_out");
            let mut s = ComplexMatrix::zeros(m, m);
            for a in &outs {
                s = s + a;
            }
            let w = match inv_sqrt_pd(&s) {
                Ok(w) => w,
                Err(_) => {
                    // rank-deficient sum: add a full-rank term
                    outs.push(ComplexMatrix::identity(m).scale_re(1.0 / m as f64));
                    s = s + ComplexMatrix::identity(m).scale_re(1.0 / m as f64);
                    inv_sqrt_pd(&s).unwrap()
                }
            };
            outs = outs.iter().map(|a| (&w * a * &w).hermitian_part()).collect();
        }
        let mut states = states;
        while states.len() < outs.len() {
            states.push(random::density(n, n, &mut rng));
        }
        EbMap::from_terms(n, m, states.into_iter().zip(outs).collect())
    }

    /// Unital measure-and-prepare map whose states live on mutually orthogonal
    /// subspaces `f_i` and whose outputs are orthogonal projections `e_i` with
    /// `Σ e_i = I`. On `span{f_i}` the map is multiplicative, so its range equals
    /// the image of its definite set.
    pub fn random_block_eb(seed: u64, n: usize) -> EbMap {
        let mut rng = rng_from_seed(seed);
        let blocks = rng.random_range(1..=n);
        let split_in = random_partition(n, blocks, &mut rng);
        let split_out = random_partition(n, blocks, &mut rng);
        let u_in = random::unitary(n, &mut rng);
        let u_out = random::unitary(n, &mut rng);
        let mut terms = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let (s0, s1) = split_in[b];
            let len = s1 - s0;
            let local = random::density(len, len, &mut rng);
            let embedded = ComplexMatrix::from_fn(n, n, |i, j| {
                if (s0..s1).contains(&i) && (s0..s1).contains(&j) {
                    local.get(i - s0, j - s0)
                } else {
                    ZERO
                }
            });
            let d = &u_in * &embedded * &u_in.adjoint();
            let (t0, t1) = split_out[b];
            let proj = ComplexMatrix::from_fn(n, n, |i, j| if i == j && (t0..t1).contains(&i) { ONE } else { ZERO });
            let e = &u_out * &proj * &u_out.adjoint();
            terms.push((d.hermitian_part(), e.hermitian_part()));
        }
        EbMap::from_terms(n, n, terms)
    }

    fn random_partition(n: usize, parts: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
        let mut sizes = vec![1usize; parts];
        for _ in parts..n {
            let k = rng.random_range(0..parts);
            sizes[k] += 1;
        }
        let mut out = Vec::with_capacity(parts);
        let mut start = 0;
        for s in sizes {
            out.push((start, start + s));
            start += s;
        }
        out
    }

    /// `t ∘ cp`: a random completely copositive map.
    pub fn random_copositive(seed: u64, n: usize, m: usize, size: usize) -> LinMap {
        let cp = random_cp(seed, n, m, size);
        LinMap::transpose_map(m).compose(&cp).unwrap()
    }

    /// One random CP map plus one random copositive map.
    pub fn random_decomposable(seed: u64, n: usize, m: usize, size: usize) -> LinMap {
        let mut rng = rng_from_seed(seed);
        let s1: u64 = rng.random();
        let s2: u64 = rng.random();
        random_cp(s1, n, m, size).add(&random_copositive(s2, n, m, size)).unwrap()
    }

    /// Hermiticity-preserving map with a random Hermitian Choi matrix `W`, shifted by the
    /// optimised minimum of `<u⊗v|W|u⊗v>` so that it is block-positive up to the
    /// optimiser's accuracy. Typically not completely positive.
    pub fn random_hardened_positive(seed: u64, n: usize, m: usize) -> LinMap {
        let mut rng = rng_from_seed(seed);
        let w = random::hermitian(n * m, &mut rng);
        let r = product_opt::minimize(w.inner(), n, m, 40, 300, &[], &mut rng);
        let shift = -r.value + 1e-6;
        let choi = &w + &ComplexMatrix::identity(n * m).scale_re(shift);
        let norm = choi.trace().re.abs().max(1e-12);
        LinMap::from_choi(n, m, choi.scale_re(1.0 / norm)).unwrap()
    }
}
