//! Projections onto abelian subalgebras spanned by an orthogonal resolution of the identity,
//! `P(a) = Σ ρ(e_i)⁻¹ ρ(e_i a e_i) e_i`, and the doubled pinching `E`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{Functional, LinMap};
use crate::matrix::{herm_eig, tensor, ComplexMatrix, C64};
use crate::random;
use crate::separability::{Certificate, ProductTerm, SepVerdict, Verdict};

pub const CENTRALIZER_TOL: f64 = 1e-8;
pub const RESOLUTION_TOL: f64 = 1e-8;
pub const WEIGHT_FLOOR: f64 = 1e-12;
pub const FAITHFUL_TOL: f64 = 1e-10;
/// Tolerance for the identities `P` must satisfy once assembled.
pub const CHECK_TOL: f64 = 1e-9;

/// `max |ρ(eb) - ρ(be)|` over `e` in `elems` and matrix units `b`.
pub fn centralizer_check(rho: &Functional, elems: &[ComplexMatrix]) -> Result<f64> {
    let n = rho.dim();
    let mut worst: f64 = 0.0;
    for e in elems {
        if e.rows() != n || e.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "element {}x{} against a state on M_{n}",
                e.rows(),
                e.cols()
            )));
        }
        worst = worst.max(centralizer_residual(rho, e));
    }
    Ok(worst)
}

fn centralizer_residual(rho: &Functional, e: &ComplexMatrix) -> f64 {
    let n = rho.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let b = ComplexMatrix::unit(n, i, j);
            worst = worst.max((rho.eval(&(e * &b)) - rho.eval(&(&b * e))).norm());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionChecks {
    pub resolution_residual: f64,
    pub centralizer_residual: f64,
    pub unital_residual: f64,
    pub idempotency_residual: f64,
    /// `max_ij |ρ(P(E_ij)) - ρ(E_ij)|`.
    pub invariance_residual: f64,
    /// `max_ij |ω_i(e_j) - δ_ij|`.
    pub omega_residual: f64,
    /// Largest entry of `ω_i`'s density outside the `e_i` block.
    pub support_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbelianProjectionData {
    pub projections: Vec<ComplexMatrix>,
    /// Normalised to a state.
    pub rho: Functional,
    pub weights: Vec<f64>,
    #[serde(rename = "P")]
    pub p: LinMap,
    #[serde(rename = "E")]
    pub e: LinMap,
    pub checks: ProjectionChecks,
}

impl AbelianProjectionData {
    /// Density of `ω_i = ρ(e_i · e_i)/ρ(e_i)`.
    pub fn omega_density(&self, i: usize) -> ComplexMatrix {
        let e = &self.projections[i];
        (e * self.rho.density() * e).scale_re(1.0 / self.weights[i])
    }

    /// `Σ_i (rank e_i / n) ω_i ⊗ e_iᵗ/rank e_i`, the dual functional of `P` as a convex
    /// combination of product states.
    pub fn separable_certificate(&self) -> SepVerdict {
        let n = self.rho.dim() as f64;
        let terms = (0..self.projections.len())
            .map(|i| {
                let et = self.projections[i].transpose();
                let rank = et.trace().re;
                ProductTerm {
                    weight: rank / n,
                    a: self.omega_density(i),
                    b: et.scale_re(1.0 / rank),
                }
            })
            .collect::<Vec<_>>();
        let mut sigma = ComplexMatrix::zeros(self.rho.dim().pow(2), self.rho.dim().pow(2));
        for t in &terms {
            sigma = sigma + tensor(&t.a, &t.b).scale_re(t.weight);
        }
        let target = self.p.dual_functional().density().scale_re(1.0 / n);
        let residual = (target.without_dims() - sigma).frobenius_norm();
        SepVerdict {
            verdict: Verdict::Separable,
            certificate: Certificate::ProductDecomposition {
                terms,
                residual,
                eps: 1e-10,
                iterations: 0,
            },
        }
    }
}

fn resolution_residual(n: usize, projections: &[ComplexMatrix]) -> Result<f64> {
    let mut sum = ComplexMatrix::zeros(n, n);
    let mut worst: f64 = 0.0;
    for (i, a) in projections.iter().enumerate() {
        if a.rows() != n || a.cols() != n {
            return Err(Error::DimensionMismatch(format!("projection {i} is not {n}x{n}")));
        }
        worst = worst.max(a.self_adjoint_residual());
        for (j, b) in projections.iter().enumerate() {
            let ab = a * b;
            let expected = if i == j { a.clone() } else { ComplexMatrix::zeros(n, n) };
            worst = worst.max((ab - expected).max_abs());
        }
        sum = sum + a.clone();
    }
    Ok(worst.max((sum - ComplexMatrix::identity(n)).max_abs()))
}

/// Assembles `P` and `E` for a faithful state `rho` and an orthogonal resolution of the identity
/// inside its centralizer.
pub fn build_projection(rho: &Functional, projections: &[ComplexMatrix]) -> Result<AbelianProjectionData> {
    let n = rho.dim();
    if projections.is_empty() {
        return Err(Error::InvalidInput("no projections".into()));
    }
    let d = rho.density().hermitian_part();
    let tr = d.trace().re;
    if tr <= 0.0 {
        return Err(Error::NotFaithful { min_eig: tr });
    }
    let d = d.scale_re(1.0 / tr);
    let min_eig = herm_eig(&d)?.min();
    if min_eig <= FAITHFUL_TOL {
        return Err(Error::NotFaithful { min_eig });
    }
    let rho = Functional::single(d, n)?;

    let resolution = resolution_residual(n, projections)?;
    if resolution > RESOLUTION_TOL {
        return Err(Error::NotResolution { residual: resolution });
    }
    let mut centralizer: f64 = 0.0;
    for (index, e) in projections.iter().enumerate() {
        let residual = centralizer_residual(&rho, e);
        if residual > CENTRALIZER_TOL {
            return Err(Error::CentralizerViolation { index, residual });
        }
        centralizer = centralizer.max(residual);
    }
    let mut weights = Vec::with_capacity(projections.len());
    for (index, e) in projections.iter().enumerate() {
        let weight = rho.eval(e).re;
        if weight <= WEIGHT_FLOOR {
            return Err(Error::ZeroWeight { index, weight });
        }
        weights.push(weight);
    }

    let p = LinMap::from_fn(n, n, |a| {
        let mut out = ComplexMatrix::zeros(n, n);
        for (e, w) in projections.iter().zip(&weights) {
            let c = rho.eval(&(e * a * e)) / w;
            out = out + e.scale(c);
        }
        out
    });
    let kraus = projections
        .iter()
        .zip(&weights)
        .map(|(e, w)| tensor(e, &e.transpose()).scale_re(w.sqrt().recip()))
        .collect::<Vec<_>>();
    let e_map = LinMap::from_kraus(&kraus)?;

    let pp = p.compose(&p)?;
    let idempotency_residual = (pp.choi() - p.choi()).max_abs();
    let mut invariance_residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let u = ComplexMatrix::unit(n, i, j);
            invariance_residual = invariance_residual.max((rho.eval(&p.apply(&u)?) - rho.eval(&u)).norm());
        }
    }
    let mut data = AbelianProjectionData {
        projections: projections.to_vec(),
        rho,
        weights,
        checks: ProjectionChecks {
            resolution_residual: resolution,
            centralizer_residual: centralizer,
            unital_residual: p.unital_residual(),
            idempotency_residual,
            invariance_residual,
            omega_residual: 0.0,
            support_residual: 0.0,
        },
        p,
        e: e_map,
    };
    let mut omega: f64 = 0.0;
    let mut support: f64 = 0.0;
    for i in 0..projections.len() {
        let w = data.omega_density(i);
        for (j, e) in projections.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            omega = omega.max((w.trace_product(e) - C64::new(expected, 0.0)).norm());
        }
        let outside = &w - &(&projections[i] * &w * &projections[i]);
        support = support.max(outside.max_abs());
    }
    data.checks.omega_residual = omega;
    data.checks.support_residual = support;
    let c = &data.checks;
    let worst = c.unital_residual.max(c.idempotency_residual).max(c.invariance_residual).max(c.omega_residual);
    if worst > CHECK_TOL {
        return Err(Error::Inconsistency(format!("assembled projection misses its identities by {worst:.3e}")));
    }
    Ok(data)
}

pub fn pinching_e(data: &AbelianProjectionData) -> LinMap {
    data.e.clone()
}

/// `(ρ ⊗ Tr)(y) = Tr((D_ρ ⊗ I) y)`.
pub fn rho_tensor_trace(rho: &Functional, y: &ComplexMatrix) -> C64 {
    let n = rho.dim();
    let m = y.rows() / n;
    tensor(rho.density(), &ComplexMatrix::identity(m)).trace_product(y)
}

/// `max |P̃(a⊗b) - (ρ⊗Tr)(E(a⊗b))|` over all pairs of matrix units.
pub fn dual_identity_check(data: &AbelianProjectionData) -> Result<f64> {
    let n = data.rho.dim();
    let dual = data.p.dual_functional();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a = ComplexMatrix::unit(n, i, j);
            for k in 0..n {
                for l in 0..n {
                    let x = tensor(&a, &ComplexMatrix::unit(n, k, l));
                    let lhs = dual.eval(&x);
                    let rhs = rho_tensor_trace(&data.rho, &data.e.apply(&x)?);
                    worst = worst.max((lhs - rhs).norm());
                }
            }
        }
    }
    Ok(worst)
}

/// Diagonal projections onto consecutive blocks of the given sizes.
pub fn block_projections(sizes: &[usize]) -> Vec<ComplexMatrix> {
    let n: usize = sizes.iter().sum();
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let mut d = vec![0.0; n];
            d[start..start + s].iter_mut().for_each(|x| *x = 1.0);
            start += s;
            ComplexMatrix::diag(&d)
        })
        .collect()
}

/// Random instance: block projections, a projection `Q(a) = Σ σ_i(a) e_i` built from
/// faithful states `σ_i` supported on the blocks, and the invariant state `ρ = Σ w_i σ_i`.
#[derive(Clone, Debug)]
pub struct BlockInstance {
    pub projections: Vec<ComplexMatrix>,
    pub rho: Functional,
    pub q: LinMap,
}

pub fn block_instance(sizes: &[usize], rng: &mut impl Rng) -> Result<BlockInstance> {
    let n: usize = sizes.iter().sum();
    let projections = block_projections(sizes);
    let mut sigmas = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        let block = random::density(s, s, rng);
        let mut full = ComplexMatrix::zeros(n, n);
        for i in 0..s {
            for j in 0..s {
                full.set(start + i, start + j, block.get(i, j));
            }
        }
        sigmas.push(full);
        start += s;
    }
    let raw: Vec<f64> = sizes.iter().map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut d = ComplexMatrix::zeros(n, n);
    for (s, w) in sigmas.iter().zip(&raw) {
        d = d + s.scale_re(w / total);
    }
    let q = {
        let (projections, sigmas) = (projections.clone(), sigmas.clone());
        LinMap::from_fn(n, n, move |a| {
            let mut out = ComplexMatrix::zeros(n, n);
            for (e, s) in projections.iter().zip(&sigmas) {
                out = out + e.scale(s.trace_product(a));
            }
            out
        })
    };
    Ok(BlockInstance {
        projections,
        rho: Functional::single(d, n)?,
        q,
    })
}

/// Random block sizes summing to `n`.
pub fn random_partition(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let s = rng.random_range(1..=left);
        sizes.push(s);
        left -= s;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_from_seed;

    fn diag_state(d: &[f64]) -> Functional {
        Functional::single(ComplexMatrix::diag(d), d.len()).unwrap()
    }

    #[test]
    fn centralizer_examples() {
        let mut rng = rng_from_seed(0);
        let elems = vec![random::hermitian(3, &mut rng), random::unitary(3, &mut rng)];
        assert!(centralizer_check(&Functional::normalized_trace(3), &elems).unwrap() < 1e-15);
        let rho = diag_state(&[0.2, 0.3, 0.5]);
        assert!(centralizer_check(&rho, &block_projections(&[1, 2])).unwrap() <= 1e-12);
        let d = (ComplexMatrix::identity(2) + ComplexMatrix::pauli_x().scale_re(0.5)).scale_re(0.5);
        let rho = Functional::single(d, 2).unwrap();
        assert!(centralizer_check(&rho, &[ComplexMatrix::unit(2, 0, 0)]).unwrap() > 0.1);
    }

    #[test]
    fn build_projection_examples() {
        let data = build_projection(&Functional::normalized_trace(2), &block_projections(&[1, 1])).unwrap();
        assert!(data.p.choi().approx_eq(LinMap::pinching(2).choi(), 1e-12));

        let mut rng = rng_from_seed(4);
        let rho = Functional::single(random::density(3, 3, &mut rng), 3).unwrap();
        let data = build_projection(&rho, &[ComplexMatrix::identity(3)]).unwrap();
        let a = random::ginibre(3, 3, &mut rng);
        assert!(data.p.apply(&a).unwrap().approx_eq(&ComplexMatrix::identity(3).scale(rho.eval(&a)), 1e-12));

        let data = build_projection(&diag_state(&[1.0 / 3.0, 2.0 / 3.0]), &block_projections(&[1, 1])).unwrap();
        assert!(data.p.choi().approx_eq(LinMap::pinching(2).choi(), 1e-12));
    }

    #[test]
    fn build_projection_errors() {
        let e = block_projections(&[1, 1]);
        assert!(matches!(
            build_projection(&diag_state(&[1.0, 0.0]), &e),
            Err(Error::NotFaithful { .. })
        ));
        let d = (ComplexMatrix::identity(2) + ComplexMatrix::pauli_x().scale_re(0.5)).scale_re(0.5);
        assert!(matches!(
            build_projection(&Functional::single(d, 2).unwrap(), &e),
            Err(Error::CentralizerViolation { .. })
        ));
        assert!(matches!(
            build_projection(&diag_state(&[0.5, 0.5]), &[ComplexMatrix::unit(2, 0, 0)]),
            Err(Error::NotResolution { .. })
        ));
    }

    #[test]
    fn pinching_e_examples() {
        let mut rng = rng_from_seed(2);
        let rho = Functional::single(random::density(2, 2, &mut rng), 2).unwrap();
        let data = build_projection(&rho, &[ComplexMatrix::identity(2)]).unwrap();
        assert!(pinching_e(&data).choi().approx_eq(LinMap::identity(4).choi(), 1e-12));

        let data = build_projection(&Functional::normalized_trace(2), &block_projections(&[1, 1])).unwrap();
        let e = pinching_e(&data);
        let x = random::ginibre(4, 4, &mut rng);
        let expected = ComplexMatrix::from_fn(4, 4, |r, c| {
            if r == c && (r == 0 || r == 3) {
                x.get(r, c).scale(2.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        assert!(e.apply(&x).unwrap().approx_eq(&expected, 1e-12));
        assert!(e.is_cp(1e-10));

        let (a, b) = (random::ginibre(2, 2, &mut rng), random::ginibre(2, 2, &mut rng));
        let mut expected = ComplexMatrix::zeros(4, 4);
        for (p, w) in data.projections.iter().zip(&data.weights) {
            let pt = p.transpose();
            expected = expected + tensor(&(p * &a * p), &(&pt * &b * &pt)).scale_re(1.0 / w);
        }
        assert!(e.apply(&tensor(&a, &b)).unwrap().approx_eq(&expected, 1e-12));
    }

    #[test]
    fn dual_identity_examples() {
        let data = build_projection(&Functional::normalized_trace(2), &block_projections(&[1, 1])).unwrap();
        assert!(dual_identity_check(&data).unwrap() <= 1e-12);
        let mut rng = rng_from_seed(8);
        let rho = Functional::single(random::density(2, 2, &mut rng), 2).unwrap();
        let data = build_projection(&rho, &[ComplexMatrix::identity(2)]).unwrap();
        assert!(dual_identity_check(&data).unwrap() <= 1e-12);
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let data = build_projection(&diag_state(&w), &block_projections(&[1, 1, 1])).unwrap();
        assert!(dual_identity_check(&data).unwrap() <= 1e-10);
    }

    #[test]
    fn invariant_projection_is_unique_and_entanglement_breaking() {
        let mut rng = rng_from_seed(11);
        for n in 2..=4 {
            for _ in 0..5 {
                let sizes = random_partition(n, &mut rng);
                let inst = block_instance(&sizes, &mut rng).unwrap();
                let data = build_projection(&inst.rho, &inst.projections).unwrap();
                assert!(data.p.choi().approx_eq(inst.q.choi(), 1e-8));
                assert!(data.checks.support_residual <= 1e-10);
                let cert = data.separable_certificate();
                assert!(cert.verify(&data.p.dual_functional()).unwrap().ok);
            }
        }
    }
}
