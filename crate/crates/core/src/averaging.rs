//! Averaging `φ_n = (φ + φ² + ... + φⁿ)/n` of a unital positive map, its limit `P_φ`, the
//! fixed-point space `M_φ` and invariant states.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::StarAlgebra;
use crate::definite::{agreement, definite_residual, Agreement, MEMBERSHIP_TOL, RANK_TOL};
use crate::error::{Error, Result};
use crate::maps::{Functional, LinMap};
use crate::matrix::{herm_eig, null_space, numerical_rank, stack_columns, ComplexMatrix, C64};
use crate::separability::{SepOracle, SepVerdict};

/// Relative singular-value cut-off for the eigenvalue-1 eigenspaces.
pub const EIGEN_ONE_TOL: f64 = 1e-8;
/// Invariant densities with smallest eigenvalue above this are faithful.
pub const FAITHFUL_TOL: f64 = 1e-10;
pub const DEFAULT_CESARO_TOL: f64 = 1e-10;
/// Cap on the power of `φ` used by the averages.
pub const DEFAULT_MAX_N: u64 = 100_000;

fn square(phi: &LinMap) -> Result<usize> {
    if phi.dim_in() != phi.dim_out() {
        return Err(Error::DimensionMismatch(format!(
            "averaging needs a map on one algebra, got M_{} -> M_{}",
            phi.dim_in(),
            phi.dim_out()
        )));
    }
    Ok(phi.dim_in())
}

/// Projection onto the eigenvalue-1 eigenspace along the other spectral subspaces,
/// `R (L^*R)^{-1} L^*` from right and left eigenvectors.
fn spectral_superoperator(s: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let d = s.nrows();
    let shifted = s - DMatrix::<C64>::identity(d, d);
    let right = null_space(&shifted, EIGEN_ONE_TOL);
    let left = null_space(&shifted.adjoint(), EIGEN_ONE_TOL);
    if right.is_empty() {
        return Err(Error::Numerical("no eigenvalue within tolerance of 1".into()));
    }
    if right.len() != left.len() {
        return Err(Error::Numerical(format!(
            "left and right eigenvalue-1 spaces differ in dimension ({} vs {})",
            left.len(),
            right.len()
        )));
    }
    let r = DMatrix::from_columns(&right);
    let l = DMatrix::from_columns(&left);
    let g = l.adjoint() * &r;
    let smin = g.singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
    if smin < 1e-8 {
        return Err(Error::Numerical(format!(
            "eigenvalue 1 is not semisimple (pairing singular value {smin:.3e})"
        )));
    }
    let inv = g
        .try_inverse()
        .ok_or_else(|| Error::Numerical("eigenvector pairing is singular".into()))?;
    Ok(r * inv * l.adjoint())
}

/// Spectral limit of the averages.
pub fn spectral_projection(phi: &LinMap) -> Result<LinMap> {
    let n = square(phi)?;
    LinMap::from_superoperator(n, n, &spectral_superoperator(&phi.superoperator())?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantState {
    pub state: Functional,
    pub faithful: bool,
    pub min_eig: f64,
}

/// Density `d` with `φ*(d) = d`, taken as the averaged image of `I/n` under the adjoint.
pub fn invariant_state(phi: &LinMap) -> Result<InvariantState> {
    let n = square(phi)?;
    let p_adj = spectral_projection(&phi.adjoint_map())?;
    let d = p_adj.apply(&ComplexMatrix::identity(n).scale_re(1.0 / n as f64))?.hermitian_part();
    let tr = d.trace().re;
    if tr <= 1e-12 {
        return Err(Error::Numerical(format!("invariant density has trace {tr:.3e}")));
    }
    let d = d.scale_re(1.0 / tr);
    let min_eig = herm_eig(&d)?.min();
    if min_eig < -1e-9 {
        return Err(Error::NotPsd { min_eig });
    }
    Ok(InvariantState {
        state: Functional::single(d, n)?,
        faithful: min_eig > FAITHFUL_TOL,
        min_eig,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CesaroResult {
    /// Spectral projection; authoritative.
    pub projection: LinMap,
    /// Highest power of `φ` used, or `None` without convergence.
    pub steps: Option<u64>,
    /// Extrapolated average at convergence.
    pub cesaro: Option<LinMap>,
    /// `‖cesaro - P‖_F` on the superoperators.
    pub agreement: Option<f64>,
}

/// Averages `φ_n` from incrementally accumulated powers. At dyadic `n` the Richardson
/// combination `R_n = 2 φ_{2n} - φ_n` removes the `1/n` term of the averages; iteration stops
/// once successive `R_n` differ by at most `tol` (Frobenius norm) or the power reaches `max_n`.
pub fn cesaro_projection(phi: &LinMap, tol: f64, max_n: u64) -> Result<CesaroResult> {
    let n = square(phi)?;
    let s = phi.superoperator();
    let p = spectral_superoperator(&s)?;
    let projection = LinMap::from_superoperator(n, n, &p)?;
    let mut pow = s.clone();
    let mut sum = s.clone();
    let mut half_avg: Option<DMatrix<C64>> = None;
    let mut last: Option<DMatrix<C64>> = None;
    let mut j: u64 = 1;
    loop {
        if j.is_power_of_two() {
            let avg = &sum * C64::new(1.0 / j as f64, 0.0);
            if let Some(h) = half_avg.take() {
                let r = &avg * C64::new(2.0, 0.0) - h;
                if let Some(prev) = last.take() {
                    if (&r - &prev).norm() <= tol {
                        let agreement = (&r - &p).norm();
                        if agreement > 10.0 * tol {
                            return Err(Error::Inconsistency(format!(
                                "averages converged {agreement:.3e} away from the spectral projection"
                            )));
                        }
                        return Ok(CesaroResult {
                            projection,
                            steps: Some(j),
                            cesaro: Some(LinMap::from_superoperator(n, n, &r)?),
                            agreement: Some(agreement),
                        });
                    }
                }
                last = Some(r);
            }
            half_avg = Some(avg);
        }
        if j >= max_n {
            return Ok(CesaroResult {
                projection,
                steps: None,
                cesaro: None,
                agreement: None,
            });
        }
        pow = &pow * &s;
        sum += &pow;
        j += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub algebra: StarAlgebra,
    pub jordan_closed: bool,
    pub jordan_residual: f64,
    pub multiplicatively_closed: bool,
    pub closure_residual: f64,
    /// Every basis element is definite; checked only with a faithful invariant state.
    pub contained_in_definite: Option<bool>,
    pub max_definite_residual: f64,
}

/// Null space of `φ - id` with closure flags.
pub fn fixed_point_algebra(phi: &LinMap) -> Result<FixedPointReport> {
    let n = square(phi)?;
    let s = phi.superoperator();
    let shifted = &s - DMatrix::<C64>::identity(n * n, n * n);
    let basis: Vec<ComplexMatrix> = null_space(&shifted, EIGEN_ONE_TOL)
        .iter()
        .map(|v| ComplexMatrix::unvectorize(v, n, n))
        .collect();
    let algebra = StarAlgebra::span_of(n, &basis)?;
    let jordan_residual = algebra.jordan_closure_residual();
    let closure_residual = algebra.closure_residual();
    let faithful = invariant_state(phi).map(|s| s.faithful).unwrap_or(false);
    let mut max_definite_residual: f64 = 0.0;
    for b in algebra.basis() {
        max_definite_residual = max_definite_residual.max(definite_residual(phi, b)?);
    }
    Ok(FixedPointReport {
        jordan_closed: jordan_residual <= MEMBERSHIP_TOL,
        jordan_residual,
        multiplicatively_closed: closure_residual <= MEMBERSHIP_TOL,
        closure_residual,
        contained_in_definite: faithful.then_some(max_definite_residual <= MEMBERSHIP_TOL),
        max_definite_residual,
        algebra,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    pub invariant_state: Functional,
    pub faithful: bool,
    #[serde(rename = "P")]
    pub p: LinMap,
    /// Spectral norm of `C_{P∘P} - C_P`.
    pub idempotency_residual: f64,
    pub fixed_algebra: StarAlgebra,
    pub cesaro_steps: Option<u64>,
    pub cesaro_agreement: Option<f64>,
    /// `max_ij |ρ(P(E_ij)) - ρ(E_ij)|`.
    pub invariance_residual: f64,
    pub unital_residual: f64,
    /// The range of `P` is the fixed-point space.
    pub range_is_fixed_space: bool,
}

pub fn average(phi: &LinMap, tol: f64, max_n: u64) -> Result<AveragingReport> {
    let n = square(phi)?;
    let inv = invariant_state(phi)?;
    let c = cesaro_projection(phi, tol, max_n)?;
    let p = c.projection;
    let fixed = fixed_point_algebra(phi)?;
    let pp = p.compose(&p)?;
    let idempotency_residual = (pp.choi() - p.choi())
        .into_inner()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let rho = &inv.state;
    let mut invariance_residual: f64 = 0.0;
    let mut images = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let e = ComplexMatrix::unit(n, i, j);
            let pe = p.apply(&e)?;
            invariance_residual = invariance_residual.max((rho.eval(&pe) - rho.eval(&e)).norm());
            images.push(pe);
        }
    }
    let rank = numerical_rank(&stack_columns(&images), RANK_TOL);
    let inside = images.iter().all(|x| fixed.algebra.projection_residual(x) <= 1e-8);
    Ok(AveragingReport {
        faithful: inv.faithful,
        invariant_state: inv.state,
        idempotency_residual,
        unital_residual: p.unital_residual(),
        range_is_fixed_space: inside && rank == fixed.algebra.dim(),
        fixed_algebra: fixed.algebra,
        cesaro_steps: c.steps,
        cesaro_agreement: c.agreement,
        invariance_residual,
        p,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corollary5Report {
    pub invariant_min_eig: f64,
    /// `P_φ` entanglement breaking.
    pub verdict_i: SepVerdict,
    /// Fixed-point space abelian.
    pub verdict_ii: bool,
    /// Dual functional of `P_φ` separable.
    pub verdict_iii: SepVerdict,
    pub agreement: Agreement,
}

/// Requires a faithful invariant state.
pub fn corollary5_harness(phi: &LinMap, oracle: &SepOracle) -> Result<Corollary5Report> {
    let inv = invariant_state(phi)?;
    if !inv.faithful {
        return Err(Error::NotFaithful { min_eig: inv.min_eig });
    }
    let p = spectral_projection(phi)?;
    let fixed = fixed_point_algebra(phi)?;
    let verdict_i = p.is_eb(oracle)?;
    let verdict_iii = oracle.classify(&p.dual_functional())?;
    if verdict_i != verdict_iii {
        return Err(Error::Inconsistency(
            "entanglement-breaking verdict differs from the dual-functional verdict".into(),
        ));
    }
    let verdict_ii = fixed.algebra.is_abelian(1e-8);
    Ok(Corollary5Report {
        invariant_min_eig: inv.min_eig,
        agreement: agreement(verdict_ii, verdict_iii.verdict),
        verdict_i,
        verdict_ii,
        verdict_iii,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::generators::random_unital_cp;
    use crate::random::{self, rng_from_seed};

    fn phase_conjugation(theta: f64) -> LinMap {
        let u = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => C64::new(1.0, 0.0),
            (1, 1) => C64::from_polar(1.0, theta),
            _ => C64::new(0.0, 0.0),
        });
        LinMap::conjugation(&u)
    }

    /// Unital map `y ↦ E00 y E00 + y00 E11`, whose adjoint `x ↦ Tr(x) E00` absorbs every
    /// state into `E00`.
    fn absorbing() -> LinMap {
        LinMap::from_fn(2, 2, |y| {
            ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) | (1, 1) => y.get(0, 0),
                _ => C64::new(0.0, 0.0),
            })
        })
    }

    #[test]
    fn invariant_state_examples() {
        let u = random::unitary(3, &mut rng_from_seed(3));
        let s = invariant_state(&LinMap::conjugation(&u)).unwrap();
        assert!(s.faithful);
        assert!(s.state.density().approx_eq(&ComplexMatrix::identity(3).scale_re(1.0 / 3.0), 1e-10));
        let s = invariant_state(&LinMap::pinching(3)).unwrap();
        assert!(s.state.density().approx_eq(&ComplexMatrix::identity(3).scale_re(1.0 / 3.0), 1e-10));
        let a = absorbing();
        assert!(a.unital_residual() < 1e-15);
        let s = invariant_state(&a).unwrap();
        assert!(!s.faithful);
        assert!(s.state.density().approx_eq(&ComplexMatrix::unit(2, 0, 0), 1e-10));
    }

    #[test]
    fn cesaro_examples() {
        let pinch = LinMap::pinching(3);
        let c = cesaro_projection(&pinch, DEFAULT_CESARO_TOL, DEFAULT_MAX_N).unwrap();
        assert_eq!(c.steps, Some(4));
        assert!(c.projection.choi().approx_eq(pinch.choi(), 1e-10));

        let phi = phase_conjugation(std::f64::consts::FRAC_PI_2);
        let c = cesaro_projection(&phi, DEFAULT_CESARO_TOL, DEFAULT_MAX_N).unwrap();
        assert!(c.projection.choi().approx_eq(LinMap::pinching(2).choi(), 1e-10));
        assert!(c.agreement.unwrap() <= 1e-9);

        // an irrational rotation leaves oscillating averages
        let c = cesaro_projection(&phase_conjugation(1.0), DEFAULT_CESARO_TOL, 1 << 12).unwrap();
        assert_eq!(c.steps, None);
        assert!(c.projection.choi().approx_eq(LinMap::pinching(2).choi(), 1e-10));
    }

    #[test]
    fn fixed_point_examples() {
        assert_eq!(fixed_point_algebra(&LinMap::identity(3)).unwrap().algebra.dim(), 9);
        let f = fixed_point_algebra(&LinMap::pinching(3)).unwrap();
        assert_eq!(f.algebra.dim(), 3);
        assert!(f.algebra.is_abelian(1e-10));
        assert_eq!(f.contained_in_definite, Some(true));
        let f = fixed_point_algebra(&LinMap::completely_depolarizing(3)).unwrap();
        assert_eq!(f.algebra.dim(), 1);
        assert!(f.jordan_closed);
    }

    #[test]
    fn corollary5_examples() {
        let oracle = SepOracle::default();
        let r = corollary5_harness(&phase_conjugation(2f64.sqrt()), &oracle).unwrap();
        assert!(r.verdict_ii);
        assert!(r.verdict_i.is_separable());
        assert_eq!(r.agreement, Agreement::Consistent);

        let r = corollary5_harness(&LinMap::identity(2), &oracle).unwrap();
        assert!(!r.verdict_ii);
        assert!(r.verdict_iii.is_entangled());
        assert_eq!(r.agreement, Agreement::Consistent);

        let r = corollary5_harness(&random_unital_cp(4, 2, 3), &oracle).unwrap();
        assert!(r.verdict_ii);
        assert!(r.verdict_iii.is_separable());

        assert!(matches!(corollary5_harness(&absorbing(), &oracle), Err(Error::NotFaithful { .. })));
    }

    #[test]
    fn averaging_report_invariants() {
        for seed in 0..10 {
            let phi = random_unital_cp(seed, 2 + seed as usize % 2, 2);
            let r = average(&phi, DEFAULT_CESARO_TOL, DEFAULT_MAX_N).unwrap();
            assert!(r.idempotency_residual <= 1e-8);
            assert!(r.invariance_residual <= 1e-8);
            assert!(r.unital_residual <= 1e-8);
            assert!(r.range_is_fixed_space);
            assert!(r.cesaro_agreement.unwrap() <= 1e-8);
        }
    }

    #[test]
    fn faithful_averages_do_not_kill_positive_elements() {
        let phi = random_unital_cp(9, 3, 2);
        let inv = invariant_state(&phi).unwrap();
        assert!(inv.faithful);
        let p = spectral_projection(&phi).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let x = random::psd(3, 1, &mut rng);
            assert!(p.apply(&x).unwrap().frobenius_norm() > 1e-6 * x.frobenius_norm());
        }
    }
}
