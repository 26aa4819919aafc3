//! States on `A ⊗ N_K` with `N_K = M_{2^K}` the K-th level of the 2^∞ tower, the
//! trace-invariant conditional expectations `E_k` onto `N_k ⊗ I` and per-level separability scans.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::StarAlgebra;
use crate::error::{Error, Result};
use crate::maps::{Functional, LinMap};
use crate::matrix::{herm_eig, partial_trace, tensor, ComplexMatrix, Subsystem};
use crate::random::{self, rng_from_seed};
use crate::separability::{
    witness_sweep, Certificate, ProductTerm, SepOracle, SepVerdict, SweepOutcome, Verdict, WitnessFamily,
};

/// Largest total dimension `d · 2^K`.
pub const MAX_TOTAL_DIM: usize = 64;

fn check_levels(big_k: usize, k: usize) -> Result<()> {
    if k > big_k {
        return Err(Error::OutOfRange(format!("level {k} above the truncation level {big_k}")));
    }
    if big_k >= usize::BITS as usize - 1 {
        return Err(Error::OutOfRange(format!("truncation level {big_k}")));
    }
    Ok(())
}

/// Partial trace over the last `tail` dimensions of a square matrix.
fn trace_tail(x: &ComplexMatrix, tail: usize) -> Result<ComplexMatrix> {
    let keep = x.rows() / tail;
    partial_trace(&x.clone().without_dims().with_dims(keep, tail)?, Subsystem::B)
}

/// `E_k(x) = (ι ⊗ τ)(x) ⊗ I` on `M_{2^K} = M_{2^k} ⊗ M_{2^{K-k}}`, with `τ` the normalised trace.
/// `k = 0` gives `τ(x) I`.
pub fn conditional_expectation_level(big_k: usize, k: usize) -> Result<LinMap> {
    check_levels(big_k, k)?;
    let n = 1usize << big_k;
    let tail = 1usize << (big_k - k);
    let id = ComplexMatrix::identity(tail);
    Ok(LinMap::from_fn(n, n, |x| {
        let head = trace_tail(x, tail).expect("square input");
        tensor(&head, &id).scale_re(1.0 / tail as f64).without_dims()
    }))
}

/// `N_k ⊗ I` inside `M_{2^K}`.
pub fn tower_subalgebra(big_k: usize, k: usize) -> Result<StarAlgebra> {
    check_levels(big_k, k)?;
    let head = 1usize << k;
    let id = ComplexMatrix::identity(1usize << (big_k - k));
    let basis = (0..head * head)
        .map(|r| tensor(&ComplexMatrix::unit(head, r / head, r % head), &id).without_dims())
        .collect::<Vec<_>>();
    StarAlgebra::span_of(1usize << big_k, &basis)
}

/// A factorisation `β ∘ α` of the identity of `A` through a matrix algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuclearTriple {
    pub alpha: LinMap,
    pub beta: LinMap,
    pub through_dim: usize,
    /// `max ‖β∘α(a) - a‖_F` over the basis of `A`.
    pub residual: f64,
}

/// In finite dimension one triple suffices: `α` embeds `A` into its ambient `M_d`, `β` is the
/// trace-invariant conditional expectation back onto `A`.
pub fn nuclear_triple(a: &StarAlgebra) -> Result<NuclearTriple> {
    let d = a.ambient_dim();
    let alpha = LinMap::identity(d);
    let beta = a.conditional_expectation()?;
    let ba = beta.compose(&alpha)?;
    let mut residual: f64 = 0.0;
    for x in a.basis() {
        residual = residual.max((ba.apply(x)? - x.clone()).frobenius_norm());
    }
    Ok(NuclearTriple {
        alpha,
        beta,
        through_dim: d,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerState {
    #[serde(rename = "A_dim")]
    pub a_dim: usize,
    #[serde(rename = "level_K")]
    pub level_k: usize,
    /// Subalgebra of `M_d` carrying the first factor; the density lies in `A ⊗ M_{2^K}`.
    pub a_algebra: StarAlgebra,
    pub h: Functional,
}

impl TowerState {
    pub fn new(a_algebra: StarAlgebra, level_k: usize, density: ComplexMatrix) -> Result<Self> {
        let d = a_algebra.ambient_dim();
        if level_k > 6 || d * (1usize << level_k) > MAX_TOTAL_DIM {
            return Err(Error::OutOfRange(format!(
                "total dimension {d} x 2^{level_k} exceeds {MAX_TOTAL_DIM}"
            )));
        }
        let m = 1usize << level_k;
        let h = Functional::bipartite(density, d, m)?;
        let x = h.density();
        if !x.is_self_adjoint(1e-10) {
            return Err(Error::NotSelfAdjoint {
                residual: x.self_adjoint_residual(),
                tol: 1e-10,
            });
        }
        let tr = x.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("density has trace {:.6}", tr.re)));
        }
        let min_eig = herm_eig(x)?.min();
        if min_eig < -1e-9 {
            return Err(Error::NotPsd { min_eig });
        }
        let inside = a_algebra.conditional_expectation()?.ampliate_left(x)?;
        let residual = (inside - x.clone()).max_abs();
        if residual > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "density leaves the first-factor algebra by {residual:.3e}"
            )));
        }
        Ok(Self {
            a_dim: d,
            level_k,
            a_algebra,
            h,
        })
    }

    pub fn full(d: usize, level_k: usize, density: ComplexMatrix) -> Result<Self> {
        Self::new(StarAlgebra::full(d), level_k, density)
    }

    /// Level-k density `h_k ⊗ I/2^{K-k}` seen at level `K`.
    pub fn embed(&self, big_k: usize) -> Result<ComplexMatrix> {
        check_levels(big_k, self.level_k)?;
        let tail = 1usize << (big_k - self.level_k);
        let id = ComplexMatrix::identity(tail).scale_re(1.0 / tail as f64);
        tensor(&self.h.density().clone().without_dims(), &id)
            .without_dims()
            .with_dims(self.a_dim, 1usize << big_k)
    }
}

/// The state `h ∘ (β∘α ⊗ E_k)` restricted to `A ⊗ N_k`: the tail factors are traced out.
pub fn truncate_state(s: &TowerState, k: usize) -> Result<TowerState> {
    check_levels(s.level_k, k)?;
    let tail = 1usize << (s.level_k - k);
    let density = trace_tail(&s.h.density().clone().without_dims(), tail)?;
    TowerState::new(s.a_algebra.clone(), k, density)
}

/// Pushes a product decomposition at level `K` through the tail trace. The Frobenius
/// residual on the compressed densities grows by at most `√(2^{K-k})`, which widens the
/// advertised `eps` accordingly.
pub fn transport_certificate(cert: &SepVerdict, from_level: usize, to_level: usize) -> Result<Option<SepVerdict>> {
    check_levels(from_level, to_level)?;
    let tail = 1usize << (from_level - to_level);
    let Certificate::ProductDecomposition { terms, residual, eps, iterations } = &cert.certificate else {
        return Ok(None);
    };
    let terms = terms
        .iter()
        .map(|t| {
            Ok(ProductTerm {
                weight: t.weight,
                a: t.a.clone(),
                b: trace_tail(&t.b, tail)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let widen = (tail as f64).sqrt();
    Ok(Some(SepVerdict {
        verdict: Verdict::Separable,
        certificate: Certificate::ProductDecomposition {
            terms,
            residual: residual * widen,
            eps: eps * widen,
            iterations: *iterations,
        },
    }))
}

/// `ψ ∘ E_k` as a map on `M_{2^K}`: `x ↦ ψ(Tr_tail x / 2^{K-k}) ⊗ I`.
pub fn lift_map(psi: &LinMap, big_k: usize, k: usize) -> Result<LinMap> {
    check_levels(big_k, k)?;
    if psi.dim_in() != 1usize << k || psi.dim_out() != 1usize << k {
        return Err(Error::DimensionMismatch(format!("witness on M_{} at level {k}", psi.dim_in())));
    }
    let n = 1usize << big_k;
    let tail = 1usize << (big_k - k);
    let id = ComplexMatrix::identity(tail);
    Ok(LinMap::from_fn(n, n, |x| {
        let head = trace_tail(x, tail).expect("square input").scale_re(1.0 / tail as f64);
        tensor(&psi.apply(&head).expect("matching dimensions"), &id).without_dims()
    }))
}

/// Witness families per level together with their lifts to level `K`.
#[derive(Clone, Debug)]
pub struct TowerWitnesses {
    pub level_k: usize,
    pub levels: Vec<(WitnessFamily, WitnessFamily)>,
}

impl TowerWitnesses {
    /// Level `k` (index `k - 1`) uses `family(2^k)`.
    pub fn new(level_k: usize, mut family: impl FnMut(usize) -> WitnessFamily) -> Result<Self> {
        let mut levels = Vec::with_capacity(level_k);
        for k in 1..=level_k {
            let fam = family(1usize << k);
            let lifted = WitnessFamily {
                maps: fam
                    .maps
                    .iter()
                    .map(|(label, psi)| Ok((format!("{label}∘E_{k}"), lift_map(psi, level_k, k)?)))
                    .collect::<Result<Vec<_>>>()?,
                rejected: Vec::new(),
            };
            levels.push((fam, lifted));
        }
        Ok(Self { level_k, levels })
    }

    /// The oracle's sampled families.
    pub fn from_oracle(level_k: usize, oracle: &SepOracle) -> Result<Self> {
        Self::new(level_k, |m| {
            oracle.family(m).map(|f| (*f).clone()).unwrap_or_else(|| WitnessFamily::minimal(m))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub dims: (usize, usize),
    pub witness_pass: bool,
    pub witness_min: f64,
    pub failing_witness: Option<String>,
    /// Sweep of the lifted family on the level-K state.
    pub lifted_pass: bool,
    pub lifted_min: f64,
    pub verdict: Verdict,
    pub certificate: Certificate,
    pub residual: Option<f64>,
    /// Level-K product decomposition pushed to this level still verifies.
    pub transported: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerScanReport {
    #[serde(rename = "A_dim")]
    pub a_dim: usize,
    #[serde(rename = "level_K")]
    pub level_k: usize,
    pub nuclear_residual: f64,
    pub levels: Vec<LevelReport>,
    /// Separable at every level within the decomposition tolerance. A finite-level surrogate
    /// for weak separability; it proves nothing about the limit.
    pub separable_at_all_levels: bool,
    pub inconsistencies: Vec<String>,
}

fn sweep_summary(outcome: &SweepOutcome) -> (bool, f64, Option<String>) {
    match outcome {
        SweepOutcome::Pass { min_value, .. } => (true, *min_value, None),
        SweepOutcome::Fail { label, verdict } => {
            let value = match &verdict.certificate {
                Certificate::WitnessViolation { value, .. } => *value,
                _ => f64::NAN,
            };
            (false, value, Some(label.clone()))
        }
    }
}

fn decomposition_residual(v: &SepVerdict) -> Option<f64> {
    match &v.certificate {
        Certificate::ProductDecomposition { residual, .. } => Some(*residual),
        Certificate::BudgetExhausted { best_residual, .. } => Some(*best_residual),
        _ => None,
    }
}

/// Per-level witness sweeps, lifted sweeps, classification and certificate transport.
pub fn theorem8_scan(s: &TowerState, oracle: &SepOracle, witnesses: &TowerWitnesses) -> Result<TowerScanReport> {
    if witnesses.level_k != s.level_k {
        return Err(Error::DimensionMismatch(format!(
            "witnesses built for level {} but the state lives at level {}",
            witnesses.level_k, s.level_k
        )));
    }
    let nuclear_residual = nuclear_triple(&s.a_algebra)?.residual;
    let top = oracle.classify(&s.h)?;
    let mut levels = Vec::with_capacity(s.level_k);
    let mut inconsistencies = Vec::new();
    for k in 1..=s.level_k {
        let (fam, lifted) = &witnesses.levels[k - 1];
        let hk = truncate_state(s, k)?;
        let (witness_pass, witness_min, failing_witness) = sweep_summary(&witness_sweep(&hk.h, fam, oracle.tol)?);
        let (lifted_pass, lifted_min, _) = sweep_summary(&witness_sweep(&s.h, lifted, oracle.tol)?);
        if lifted_pass && !witness_pass {
            inconsistencies.push(format!("level {k}: lifted witnesses pass at level {} but fail here", s.level_k));
        }
        let v = if k == s.level_k { top.clone() } else { oracle.classify(&hk.h)? };
        let transported = if top.is_separable() {
            let cert = transport_certificate(&top, s.level_k, k)?.expect("separable verdicts carry a decomposition");
            let ok = cert.verify(&hk.h)?.ok;
            if !ok {
                inconsistencies.push(format!("level {k}: transported decomposition fails to verify"));
            }
            if v.is_entangled() {
                inconsistencies.push(format!(
                    "level {k}: entangled although level {} is separable",
                    s.level_k
                ));
            }
            Some(ok)
        } else {
            None
        };
        if !witness_pass && v.is_separable() {
            inconsistencies.push(format!("level {k}: separable verdict with a failing witness"));
        }
        levels.push(LevelReport {
            level: k,
            dims: (s.a_dim, 1usize << k),
            witness_pass,
            witness_min,
            failing_witness,
            lifted_pass,
            lifted_min,
            verdict: v.verdict,
            residual: decomposition_residual(&v),
            certificate: v.certificate,
            transported,
        });
    }
    Ok(TowerScanReport {
        a_dim: s.a_dim,
        level_k: s.level_k,
        nuclear_residual,
        separable_at_all_levels: levels.iter().all(|l| l.verdict == Verdict::Separable),
        levels,
        inconsistencies,
    })
}

/// Kinds of sampled tower states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TowerSample {
    /// Convex combination of product states.
    Separable,
    /// Maximally entangled across `A` and the first tower factor, times a tail state.
    Bell,
    /// `I/d ⊗ ρ`.
    ScalarA,
    /// Random density of full rank.
    Generic,
}

/// Seeded state on `M_d ⊗ M_{2^K}`; separable samples come with their decomposition.
pub fn sample_state(kind: TowerSample, d: usize, level_k: usize, seed: u64) -> Result<(TowerState, Option<Vec<ProductTerm>>)> {
    let mut rng = rng_from_seed(seed);
    let m = 1usize << level_k;
    let (density, terms) = match kind {
        TowerSample::Separable => {
            let count = 1 + rng.random_range(0..2 * d);
            let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let terms: Vec<ProductTerm> = raw
                .iter()
                .map(|w| ProductTerm {
                    weight: w / total,
                    a: random::density(d, 1 + rng.random_range(0..d), &mut rng),
                    b: random::density(m, 1 + rng.random_range(0..m), &mut rng),
                })
                .collect();
            let mut x = ComplexMatrix::zeros(d * m, d * m);
            for t in &terms {
                x = x + tensor(&t.a, &t.b).scale_re(t.weight).without_dims();
            }
            (x, Some(terms))
        }
        TowerSample::Bell => {
            if d < 2 || level_k < 1 {
                return Err(Error::OutOfRange("a Bell sample needs d ≥ 2 and K ≥ 1".into()));
            }
            // (|00⟩ + |11⟩)/√2 on the first qubit of A and the first tower factor
            let mut bell = ComplexMatrix::zeros(2 * d, 2 * d);
            for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
                bell.set(i, j, crate::matrix::C64::new(0.5, 0.0));
            }
            let tail = random::density(m / 2, m / 2, &mut rng);
            (tensor(&bell, &tail).without_dims(), None)
        }
        TowerSample::ScalarA => {
            let rho = random::density(m, m, &mut rng);
            (tensor(&ComplexMatrix::identity(d).scale_re(1.0 / d as f64), &rho).without_dims(), None)
        }
        TowerSample::Generic => (random::density(d * m, d * m, &mut rng).without_dims(), None),
    };
    Ok((TowerState::full(d, level_k, density)?, terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_from_seed;

    #[test]
    fn expectation_examples() {
        assert!(conditional_expectation_level(3, 3).unwrap().choi().approx_eq(LinMap::identity(8).choi(), 1e-14));
        let e0 = conditional_expectation_level(2, 0).unwrap();
        let mut rng = rng_from_seed(1);
        let x = random::ginibre(4, 4, &mut rng);
        assert!(e0.apply(&x).unwrap().approx_eq(&ComplexMatrix::identity(4).scale(x.trace() / 4.0), 1e-14));
        let (a, b) = (random::ginibre(2, 2, &mut rng), random::ginibre(2, 2, &mut rng));
        let e1 = conditional_expectation_level(2, 1).unwrap();
        let expected = tensor(&a.scale(b.trace() / 2.0), &ComplexMatrix::identity(2));
        assert!(e1.apply(&tensor(&a, &b).without_dims()).unwrap().approx_eq(&expected.without_dims(), 1e-14));
        assert!(matches!(conditional_expectation_level(2, 3), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn expectations_form_a_tower() {
        for big_k in 1..=4 {
            let maps: Vec<LinMap> = (0..=big_k).map(|k| conditional_expectation_level(big_k, k).unwrap()).collect();
            for (k, ek) in maps.iter().enumerate() {
                assert!(ek.is_cp(1e-10), "K={big_k} k={k} min={}", ek.choi_min_eigenvalue());
                assert!(ek.unital_residual() < 1e-12);
                assert!(ek.trace_preserving_residual() < 1e-12);
                let via_algebra = tower_subalgebra(big_k, k).unwrap().conditional_expectation().unwrap();
                assert!(ek.choi().approx_eq(via_algebra.choi(), 1e-12));
                for (j, ej) in maps.iter().enumerate() {
                    let comp = ek.compose(ej).unwrap();
                    assert!(comp.choi().approx_eq(maps[k.min(j)].choi(), 1e-12));
                }
            }
        }
    }

    #[test]
    fn nuclear_triple_examples() {
        let t = nuclear_triple(&StarAlgebra::full(3)).unwrap();
        assert!(t.beta.choi().approx_eq(LinMap::identity(3).choi(), 1e-12));
        assert_eq!(t.residual, 0.0);
        let t = nuclear_triple(&StarAlgebra::diagonal(2)).unwrap();
        assert!(t.beta.compose(&t.alpha).unwrap().choi().approx_eq(LinMap::pinching(2).choi(), 1e-12));
        assert!(t.residual < 1e-14);
        assert!(t.alpha.is_cp(1e-12) && t.beta.is_cp(1e-12));
    }

    #[test]
    fn truncation_examples() {
        let (s, _) = sample_state(TowerSample::Generic, 2, 2, 3).unwrap();
        assert_eq!(truncate_state(&s, 2).unwrap(), s);

        let mut rng = rng_from_seed(5);
        let (ra, rb) = (random::density(2, 2, &mut rng), random::density(4, 4, &mut rng));
        let s = TowerState::full(2, 2, tensor(&ra, &rb).without_dims()).unwrap();
        let t = truncate_state(&s, 1).unwrap();
        let reduced = trace_tail(&rb, 2).unwrap();
        assert!(t.h.density().approx_eq(&tensor(&ra, &reduced), 1e-14));

        // (ι ⊗ E_k) of the level-K density equals the embedded truncation
        let (s, _) = sample_state(TowerSample::Generic, 2, 3, 7).unwrap();
        for k in 0..=3 {
            let ek = conditional_expectation_level(3, k).unwrap();
            let lhs = ek.ampliate_right(s.h.density()).unwrap();
            let rhs = truncate_state(&s, k).unwrap().embed(3).unwrap();
            assert!(lhs.approx_eq(&rhs, 1e-13));
        }
    }

    #[test]
    fn transported_certificates_verify() {
        let (s, terms) = sample_state(TowerSample::Separable, 2, 3, 9).unwrap();
        let cert = SepVerdict {
            verdict: Verdict::Separable,
            certificate: Certificate::ProductDecomposition {
                terms: terms.unwrap(),
                residual: 0.0,
                eps: 1e-10,
                iterations: 0,
            },
        };
        assert!(cert.verify(&s.h).unwrap().ok);
        for k in 0..3 {
            let t = transport_certificate(&cert, 3, k).unwrap().unwrap();
            assert!(t.verify(&truncate_state(&s, k).unwrap().h).unwrap().ok);
        }
    }

    #[test]
    fn lifted_witness_matches_truncated_witness() {
        let (s, _) = sample_state(TowerSample::Generic, 2, 3, 2).unwrap();
        let psi = LinMap::transpose_map(2);
        let lifted = lift_map(&psi, 3, 1).unwrap();
        let big = lifted.adjoint_map().ampliate_right(s.h.density()).unwrap();
        let small = psi.adjoint_map().ampliate_right(truncate_state(&s, 1).unwrap().h.density()).unwrap();
        let expected = tensor(&small.without_dims(), &ComplexMatrix::identity(4).scale_re(0.25));
        assert!(big.approx_eq(&expected, 1e-13));
    }

    fn small_oracle() -> SepOracle {
        let mut o = SepOracle::default();
        o.witness_sizes = Some((4, 0));
        o.decompose.max_iter = 2000;
        o
    }

    #[test]
    fn scan_examples() {
        let oracle = small_oracle();
        let w = TowerWitnesses::from_oracle(2, &oracle).unwrap();

        let (s, _) = sample_state(TowerSample::Separable, 2, 2, 1).unwrap();
        let r = theorem8_scan(&s, &oracle, &w).unwrap();
        assert!(r.inconsistencies.is_empty());
        assert!(r.separable_at_all_levels);
        assert!(r.levels.iter().all(|l| l.witness_pass && l.transported == Some(true)));

        let (s, _) = sample_state(TowerSample::Bell, 2, 2, 1).unwrap();
        let r = theorem8_scan(&s, &oracle, &w).unwrap();
        assert!(r.inconsistencies.is_empty());
        for l in &r.levels {
            assert!(!l.witness_pass);
            assert!(!l.lifted_pass);
            assert_eq!(l.verdict, Verdict::Entangled);
        }

        let (s, _) = sample_state(TowerSample::ScalarA, 2, 2, 1).unwrap();
        let r = theorem8_scan(&s, &oracle, &w).unwrap();
        assert!(r.separable_at_all_levels);
        assert!(r.inconsistencies.is_empty());
    }

    #[test]
    fn state_validation() {
        let x = ComplexMatrix::identity(8);
        assert!(matches!(TowerState::full(2, 2, x), Err(Error::InvalidInput(_))));
        assert!(matches!(
            TowerState::full(4, 5, ComplexMatrix::identity(128).scale_re(1.0 / 128.0)),
            Err(Error::OutOfRange(_))
        ));
        let mut rng = rng_from_seed(0);
        let generic = random::density(4, 4, &mut rng);
        assert!(TowerState::new(StarAlgebra::diagonal(2), 1, generic).is_err());
    }
}
