//! Definite sets `D_φ = {a : φ(a*a) = φ(a)*φ(a)}` and the range/separability harness for
//! unital maps whose range is the image of the definite set.

use serde::{Deserialize, Serialize};

use crate::algebra::{jordan_product, random_element, StarAlgebra};
use crate::error::{Error, Result};
use crate::maps::{LinMap, StinespringData};
use crate::matrix::{null_space, numerical_rank, stack_columns, ComplexMatrix, DEFAULT_TOL};
use crate::random::{self, rng_from_seed};
use crate::separability::{SepOracle, SepVerdict, Verdict};

/// Singular-value cut-off, relative to the largest, for the commutation system.
pub const NULL_SPACE_TOL: f64 = 1e-8;
/// Membership tolerance used when cross-checking computed bases.
pub const MEMBERSHIP_TOL: f64 = 1e-7;
/// Relative rank cut-off for comparing images.
pub const RANK_TOL: f64 = 1e-8;

fn membership_residual_unchecked(phi: &LinMap, a: &ComplexMatrix) -> f64 {
    let fa = phi.apply_unchecked(a);
    let lhs = phi.apply_unchecked(&(a.adjoint() * a));
    (lhs - fa.adjoint() * fa).frobenius_norm()
}

/// `‖φ(a*a) - φ(a)*φ(a)‖_F`.
pub fn definite_residual(phi: &LinMap, a: &ComplexMatrix) -> Result<f64> {
    if a.rows() != phi.dim_in() || a.cols() != phi.dim_in() {
        return Err(Error::DimensionMismatch(format!(
            "element {}x{} for a map on M_{}",
            a.rows(),
            a.cols(),
            phi.dim_in()
        )));
    }
    Ok(membership_residual_unchecked(phi, a))
}

pub fn definite_membership(phi: &LinMap, a: &ComplexMatrix, tol: f64) -> Result<bool> {
    Ok(definite_residual(phi, a)? <= tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefiniteSetReport {
    pub algebra: StarAlgebra,
    pub is_multiplicatively_closed: bool,
    pub image_dim: usize,
    pub image_equals_image_of_definite: bool,
    pub abelian_image: bool,
    pub stinespring_rank: usize,
    pub closure_residual: f64,
    pub max_membership_residual: f64,
    /// Set when the algebra was approximated by a membership sweep (map not CP).
    pub approximate: bool,
}

/// Solves `p π(x) = π(x) p` for a unital completely positive map.
pub fn definite_algebra(phi: &LinMap) -> Result<(StarAlgebra, StinespringData)> {
    let st = phi.stinespring()?;
    let n = phi.dim_in();
    let units: Vec<ComplexMatrix> = (0..n * n).map(|k| ComplexMatrix::unit(n, k / n, k % n)).collect();
    let images: Vec<ComplexMatrix> = units.iter().map(|e| st.p.commutator(&st.pi(e))).collect();
    let system = stack_columns(&images);
    let basis: Vec<ComplexMatrix> = null_space(&system, NULL_SPACE_TOL)
        .iter()
        .map(|v| ComplexMatrix::unvectorize(v, n, n))
        .collect();
    Ok((StarAlgebra::span_of(n, &basis)?, st))
}

fn image_rank(phi: &LinMap, elems: &[ComplexMatrix]) -> usize {
    let imgs: Vec<ComplexMatrix> = elems.iter().map(|e| phi.apply_unchecked(e)).collect();
    numerical_rank(&stack_columns(&imgs), RANK_TOL)
}

fn full_basis(n: usize) -> Vec<ComplexMatrix> {
    (0..n * n).map(|k| ComplexMatrix::unit(n, k / n, k % n)).collect()
}

fn finish_report(phi: &LinMap, algebra: StarAlgebra, stinespring_rank: usize, approximate: bool) -> Result<DefiniteSetReport> {
    let n = phi.dim_in();
    let max_membership_residual = algebra
        .basis()
        .iter()
        .map(|b| membership_residual_unchecked(phi, b))
        .fold(0.0, f64::max);
    let closure_residual = algebra.closure_residual();
    let image_dim = image_rank(phi, &full_basis(n));
    let image_of_d = image_rank(phi, algebra.basis());
    let images: Vec<ComplexMatrix> = algebra.basis().iter().map(|b| phi.apply_unchecked(b)).collect();
    let abelian_image = if images.is_empty() {
        true
    } else {
        StarAlgebra::span_closure(&images)?.is_abelian(1e-8)
    };
    Ok(DefiniteSetReport {
        is_multiplicatively_closed: closure_residual <= MEMBERSHIP_TOL,
        image_dim,
        image_equals_image_of_definite: image_dim == image_of_d,
        abelian_image,
        stinespring_rank,
        closure_residual,
        max_membership_residual,
        approximate,
        algebra,
    })
}

/// Definite set of a unital completely positive map via its Stinespring dilation.
pub fn definite_set(phi: &LinMap) -> Result<DefiniteSetReport> {
    let (algebra, st) = definite_algebra(phi)?;
    let rep = finish_report(phi, algebra, st.rank, false)?;
    if rep.max_membership_residual > MEMBERSHIP_TOL {
        return Err(Error::Inconsistency(format!(
            "commutant solution fails the definite-set identity: residual {:.3e}",
            rep.max_membership_residual
        )));
    }
    Ok(rep)
}

/// Self-adjoint basis of `M_n` (diagonal units and symmetrised off-diagonal pairs).
pub fn hermitian_basis(n: usize) -> Vec<ComplexMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(ComplexMatrix::unit(n, i, i));
    }
    for i in 0..n {
        for j in i + 1..n {
            let e = ComplexMatrix::unit(n, i, j);
            out.push((&e + &e.adjoint()).scale_re(s));
            out.push((&e - &e.adjoint()).scale(crate::matrix::C64::new(0.0, s)));
        }
    }
    out
}

/// Span of the elements of the self-adjoint basis, and the identity, that pass the
/// membership test. Only an approximation of `D_φ` for maps that are not CP.
pub fn definite_sweep(phi: &LinMap, tol: f64) -> Result<StarAlgebra> {
    let n = phi.dim_in();
    let mut cands = vec![ComplexMatrix::identity(n)];
    cands.extend(hermitian_basis(n));
    let pass: Vec<ComplexMatrix> = cands
        .into_iter()
        .filter(|a| membership_residual_unchecked(phi, a) <= tol)
        .collect();
    StarAlgebra::span_of(n, &pass)
}

/// Largest `‖φ(a∘b) - φ(a)∘φ(b)‖_F` over random `a ∈ D` and Ginibre `b`.
pub fn jordan_multiplicativity_check(phi: &LinMap, d: &StarAlgebra, trials: usize, seed: u64) -> Result<f64> {
    if d.ambient_dim() != phi.dim_in() {
        return Err(Error::DimensionMismatch(format!(
            "algebra in M_{} for a map on M_{}",
            d.ambient_dim(),
            phi.dim_in()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let a = random_element(d, &mut rng);
        let b = random::ginibre(d.ambient_dim(), d.ambient_dim(), &mut rng);
        let lhs = phi.apply_unchecked(&jordan_product(&a, &b)?);
        let rhs = jordan_product(&phi.apply_unchecked(&a), &phi.apply_unchecked(&b))?;
        worst = worst.max((lhs - rhs).frobenius_norm());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Agreement {
    Consistent,
    Contradiction,
    Undetermined,
    /// The range hypothesis failed, so no comparison is made.
    NotApplicable,
}

/// Compares an abelian-range flag with a separability verdict.
pub fn agreement(abelian: bool, v: Verdict) -> Agreement {
    match (abelian, v) {
        (_, Verdict::Undetermined) => Agreement::Undetermined,
        (true, Verdict::Separable) | (false, Verdict::Entangled) => Agreement::Consistent,
        _ => Agreement::Contradiction,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Report {
    pub completely_positive: bool,
    /// `D_φ` from the membership sweep rather than the dilation.
    pub approximate: bool,
    pub definite: DefiniteSetReport,
    pub hypothesis_holds: bool,
    /// Entanglement breaking.
    pub verdict_i: SepVerdict,
    /// Range of `φ` on `D_φ` is abelian.
    pub verdict_ii: bool,
    /// Dual functional separable.
    pub verdict_iii: SepVerdict,
    pub i_equals_iii: bool,
    pub agreement: Agreement,
}

/// Evaluates the three conditions for a unital positive map.
pub fn theorem4_harness(phi: &LinMap, oracle: &SepOracle) -> Result<Theorem4Report> {
    if phi.dim_in() != phi.dim_out() {
        return Err(Error::DimensionMismatch("square maps only".into()));
    }
    let res = phi.unital_residual();
    if res > 1e-8 {
        return Err(Error::NotUnital { residual: res });
    }
    let cp = phi.is_cp(DEFAULT_TOL);
    let definite = if cp {
        definite_set(phi)?
    } else {
        let a = definite_sweep(phi, MEMBERSHIP_TOL)?;
        finish_report(phi, a, 0, true)?
    };
    let hypothesis_holds = definite.image_equals_image_of_definite;
    let verdict_i = phi.is_eb(oracle)?;
    let verdict_iii = oracle.classify(&phi.dual_functional())?;
    let i_equals_iii = verdict_i == verdict_iii;
    if !i_equals_iii {
        return Err(Error::Inconsistency(
            "entanglement-breaking verdict differs from the dual-functional verdict".into(),
        ));
    }
    let verdict_ii = definite.abelian_image;
    let agreement = if hypothesis_holds {
        agreement(verdict_ii, verdict_iii.verdict)
    } else {
        Agreement::NotApplicable
    };
    Ok(Theorem4Report {
        completely_positive: cp,
        approximate: definite.approximate,
        definite,
        hypothesis_holds,
        verdict_i,
        verdict_ii,
        verdict_iii,
        i_equals_iii,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::generators::{random_block_eb, random_eb, random_unital_cp};

    #[test]
    fn membership_examples() {
        let phi = random_unital_cp(3, 3, 2);
        assert!(definite_membership(&phi, &ComplexMatrix::identity(3), 1e-10).unwrap());
        let pinch = LinMap::pinching(2);
        assert!(!definite_membership(&pinch, &ComplexMatrix::pauli_x(), 1e-3).unwrap());
        assert!((definite_residual(&pinch, &ComplexMatrix::pauli_x()).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        let u = random::unitary(3, &mut rng_from_seed(1));
        let conj = LinMap::conjugation(&u);
        let a = random::ginibre(3, 3, &mut rng_from_seed(2));
        assert!(definite_membership(&conj, &a, 1e-10).unwrap());
        assert!(definite_membership(&conj, &ComplexMatrix::identity(2), 1.0).is_err());
    }

    #[test]
    fn definite_set_examples() {
        assert_eq!(definite_set(&LinMap::identity(3)).unwrap().algebra.dim(), 9);
        for n in 2..=4 {
            let r = definite_set(&LinMap::pinching(n)).unwrap();
            assert_eq!(r.algebra.dim(), n);
            let diag = StarAlgebra::diagonal(n);
            for b in diag.basis() {
                assert!(r.algebra.contains(b, 1e-10));
            }
            assert!(r.is_multiplicatively_closed);
        }
        let r = definite_set(&LinMap::completely_depolarizing(3)).unwrap();
        assert_eq!(r.algebra.dim(), 1);
        assert!(r.algebra.contains_unit());
        assert!(matches!(definite_set(&LinMap::transpose_map(2)), Err(Error::NotCompletelyPositive { .. })));
    }

    #[test]
    fn jordan_examples() {
        let id = LinMap::identity(3);
        assert!(jordan_multiplicativity_check(&id, &StarAlgebra::full(3), 10, 0).unwrap() < 1e-12);
        let pinch = LinMap::pinching(3);
        assert!(jordan_multiplicativity_check(&pinch, &StarAlgebra::diagonal(3), 20, 1).unwrap() <= 1e-10);
        let phi = random_unital_cp(4, 3, 3);
        assert!(jordan_multiplicativity_check(&phi, &StarAlgebra::scalars(3), 20, 2).unwrap() <= 1e-10);
    }

    #[test]
    fn theorem4_examples() {
        let oracle = SepOracle::default();
        let eb = random_eb(5, 2, 2, 3, true).map;
        let r = theorem4_harness(&eb, &oracle).unwrap();
        assert!(r.verdict_i.is_separable());
        assert!(r.verdict_ii);
        assert!(r.i_equals_iii);

        let r = theorem4_harness(&LinMap::identity(2), &oracle).unwrap();
        assert!(r.hypothesis_holds);
        assert!(!r.verdict_ii);
        assert!(r.verdict_iii.is_entangled());
        assert_eq!(r.agreement, Agreement::Consistent);

        let r = theorem4_harness(&LinMap::pinching(2), &oracle).unwrap();
        assert!(r.hypothesis_holds);
        assert!(r.verdict_ii);
        assert!(r.verdict_iii.is_separable());
        assert_eq!(r.agreement, Agreement::Consistent);

        let b = random_block_eb(3, 2).map;
        let r = theorem4_harness(&b, &oracle).unwrap();
        assert!(r.hypothesis_holds);
        assert_eq!(r.agreement, Agreement::Consistent);
    }

    #[test]
    fn non_cp_maps_use_the_sweep() {
        let oracle = SepOracle::default();
        let t = LinMap::transpose_map(2);
        let r = theorem4_harness(&t, &oracle).unwrap();
        assert!(r.approximate);
        assert!(!r.completely_positive);
        // transpose is a Jordan isomorphism: every element is definite
        assert_eq!(r.definite.algebra.dim(), 4);
        assert!(r.hypothesis_holds);
        assert!(!r.verdict_ii);
        assert!(r.verdict_iii.is_entangled());
    }

    #[test]
    fn stinespring_projection_commutes_on_definite_set() {
        for seed in 0..10 {
            let phi = random_unital_cp(seed, 3, 2);
            let (alg, st) = definite_algebra(&phi).unwrap();
            for b in alg.basis() {
                assert!(st.commutation_residual(b) < 1e-8);
            }
        }
    }
}
