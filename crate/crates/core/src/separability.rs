//! Separability of bipartite densities.
//!
//! Verdicts are three-valued and always carry a certificate that [`SepVerdict::verify`]
//! can re-check against the density. All routines normalise the density to unit trace
//! first; separability is invariant under positive scaling.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{random_element, StarAlgebra};
use crate::error::{Error, Result};
use crate::maps::{generators, Functional, LinMap, PositivityOptions};
use crate::matrix::{herm_eig_unchecked, partial_transpose, realign, tensor, ComplexMatrix, Subsystem, C64, ONE, ZERO};
use crate::product_opt;
use crate::random::{self, rng_from_seed};

/// Default distance at which a product decomposition counts as a certificate.
pub const DEFAULT_EPS: f64 = 1e-3;
/// Weights below this are dropped from reported decompositions.
const PRUNE_WEIGHT: f64 = 1e-6;
/// Atoms with fidelity above `1 - MERGE_GAP` are merged.
const MERGE_GAP: f64 = 1e-10;
/// Frank-Wolfe gap below which no descent atom is added.
const STALL_GAP: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Separable,
    Entangled,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub weight: f64,
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
}

/// What produced a negative eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WitnessKind {
    /// The density itself is not positive.
    Positivity,
    /// Partial transpose on the second factor.
    PartialTranspose,
    /// `(ι ⊗ ψ*)(h)` for a positive map `ψ`.
    Map { label: String, map: LinMap },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Certificate {
    ProductDecomposition {
        terms: Vec<ProductTerm>,
        residual: f64,
        eps: f64,
        iterations: usize,
    },
    WitnessViolation {
        witness: WitnessKind,
        value: f64,
        vector: Vec<[f64; 2]>,
    },
    RealignmentViolation {
        value: f64,
    },
    /// No decomposition within `eps`. When the search stopped early, the duality gap
    /// bound on the distance to the separable set is recorded; it is exact only if the
    /// product-state oracle found the true minimum.
    BudgetExhausted {
        iterations: usize,
        best_residual: f64,
        distance_lower_bound: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SepVerdict {
    pub verdict: Verdict,
    pub certificate: Certificate,
}

/// Outcome of re-checking a certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub ok: bool,
    /// Recomputed residual, witness value or realignment value.
    pub recomputed: f64,
    pub detail: String,
}

impl SepVerdict {
    pub fn is_separable(&self) -> bool {
        self.verdict == Verdict::Separable
    }

    pub fn is_entangled(&self) -> bool {
        self.verdict == Verdict::Entangled
    }

    /// Re-checks the certificate against `h` from scratch.
    pub fn verify(&self, h: &Functional) -> Result<VerifyReport> {
        let (x, _, _) = normalized(h)?;
        Ok(match &self.certificate {
            Certificate::ProductDecomposition { terms, eps, .. } => verify_decomposition(&x, terms, *eps),
            Certificate::WitnessViolation { witness, value, vector } => {
                let w = witness_density(&x, witness)?;
                let v = pairs_to_vec(vector);
                let val = (v.adjoint() * w.inner() * &v)[(0, 0)].re;
                let min = herm_eig_unchecked(&w.hermitian_part().into_inner()).min();
                let ok = val < 0.0 && (val - value).abs() <= 1e-10 && (min - value).abs() <= 1e-10;
                VerifyReport {
                    ok,
                    recomputed: val,
                    detail: format!("stored {value:.12e}, recomputed {val:.12e}, minimal eigenvalue {min:.12e}"),
                }
            }
            Certificate::RealignmentViolation { value } => {
                let r = realignment_value(&x)?;
                VerifyReport {
                    ok: r > 1.0 && (r - value).abs() <= 1e-10,
                    recomputed: r,
                    detail: format!("realignment trace norm {r:.12e}"),
                }
            }
            Certificate::BudgetExhausted { best_residual, .. } => VerifyReport {
                ok: self.verdict == Verdict::Undetermined,
                recomputed: *best_residual,
                detail: "no certificate to check".into(),
            },
        })
    }
}

fn verify_decomposition(x: &ComplexMatrix, terms: &[ProductTerm], eps: f64) -> VerifyReport {
    let mut problems = Vec::new();
    let mut total = 0.0;
    let mut sigma = ComplexMatrix::zeros(x.rows(), x.cols());
    for (k, t) in terms.iter().enumerate() {
        if t.weight <= 0.0 {
            problems.push(format!("term {k} has weight {:.3e}", t.weight));
        }
        for (name, f) in [("a", &t.a), ("b", &t.b)] {
            let tr = f.trace();
            let min = herm_eig_unchecked(&f.hermitian_part().into_inner()).min();
            if (tr - ONE).norm() > 1e-8 || min < -1e-10 || !f.is_self_adjoint(1e-10) {
                problems.push(format!("term {k} factor {name} is not a state"));
            }
        }
        total += t.weight;
        sigma = sigma + tensor(&t.a, &t.b).scale_re(t.weight);
    }
    if (total - 1.0).abs() > 1e-8 {
        problems.push(format!("weights sum to {total:.12}"));
    }
    let residual = (x.clone().without_dims() - sigma.without_dims()).frobenius_norm();
    if residual > eps {
        problems.push(format!("residual {residual:.3e} above {eps:.3e}"));
    }
    VerifyReport {
        ok: problems.is_empty(),
        recomputed: residual,
        detail: if problems.is_empty() {
            format!("{} terms, residual {residual:.3e}", terms.len())
        } else {
            problems.join("; ")
        },
    }
}

fn vec_to_pairs(v: &DVector<C64>) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn pairs_to_vec(p: &[[f64; 2]]) -> DVector<C64> {
    DVector::from_iterator(p.len(), p.iter().map(|q| C64::new(q[0], q[1])))
}

/// Unit-trace density with dims, together with the dims.
fn normalized(h: &Functional) -> Result<(ComplexMatrix, usize, usize)> {
    let (n, m) = h.bipartite_dims().ok_or(Error::MissingDims)?;
    let d = h.density();
    let res = d.self_adjoint_residual();
    if res > 1e-9 * d.max_abs().max(1.0) {
        return Err(Error::NotSelfAdjoint { residual: res, tol: 1e-9 });
    }
    let tr = d.trace().re;
    if tr <= 1e-14 {
        return Err(Error::InvalidInput(format!("density trace {tr:.3e} is not positive")));
    }
    Ok((d.hermitian_part().scale_re(1.0 / tr).with_dims(n, m)?, n, m))
}

fn witness_density(x: &ComplexMatrix, w: &WitnessKind) -> Result<ComplexMatrix> {
    match w {
        WitnessKind::Positivity => Ok(x.clone()),
        WitnessKind::PartialTranspose => partial_transpose(x, Subsystem::B),
        WitnessKind::Map { map, .. } => map.adjoint_map().ampliate_right(x),
    }
}

fn lowest_pair(w: &ComplexMatrix) -> (f64, DVector<C64>) {
    let e = herm_eig_unchecked(&w.hermitian_part().into_inner());
    let k = e.values.len() - 1;
    (e.values[k], e.vector(k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PptResult {
    pub passed: bool,
    pub min_eig: f64,
}

/// Positivity of the partial transpose of the normalised density.
pub fn ppt_check(h: &Functional, tol: f64) -> Result<PptResult> {
    let (x, _, _) = normalized(h)?;
    let (min, _) = lowest_pair(&partial_transpose(&x, Subsystem::B)?);
    Ok(PptResult {
        passed: min >= -tol,
        min_eig: min,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealignmentResult {
    pub passed: bool,
    pub value: f64,
}

fn realignment_value(x: &ComplexMatrix) -> Result<f64> {
    Ok(realign(x)?.into_inner().singular_values().iter().sum())
}

/// Trace norm of the realigned normalised density; above `1 + tol` proves entanglement.
pub fn realignment_check(h: &Functional, tol: f64) -> Result<RealignmentResult> {
    let (x, _, _) = normalized(h)?;
    let value = realignment_value(&x)?;
    Ok(RealignmentResult {
        passed: value <= 1.0 + tol,
        value,
    })
}

/// Positive maps `ψ: M_m -> M_m` used as entanglement witnesses.
#[derive(Clone, Debug)]
pub struct WitnessFamily {
    pub maps: Vec<(String, LinMap)>,
    /// Labels of sampled maps rejected by the positivity screen.
    pub rejected: Vec<String>,
}

impl WitnessFamily {
    /// `ι`, `t`, `decomposable` random decomposable maps and `hardened` optimiser-shifted
    /// positive maps, each screened with the block-positivity search.
    pub fn sampled(m: usize, seed: u64, decomposable: usize, hardened: usize) -> Self {
        let mut maps = vec![
            ("identity".to_string(), LinMap::identity(m)),
            ("transpose".to_string(), LinMap::transpose_map(m)),
        ];
        let mut rejected = Vec::new();
        let mut rng = rng_from_seed(seed);
        let screen = PositivityOptions {
            restarts: 20,
            sweeps: 200,
            ..PositivityOptions::default()
        };
        for k in 0..decomposable {
            let s: u64 = rng.random();
            maps.push((format!("decomposable[{k}]"), generators::random_decomposable(s, m, m, 1 + k % 2)));
        }
        for k in 0..hardened {
            let s: u64 = rng.random();
            let label = format!("hardened[{k}]");
            let psi = generators::random_hardened_positive(s, m, m);
            if psi.is_positive(&PositivityOptions { seed: s, ..screen.clone() }).is_probably_positive() {
                maps.push((label, psi));
            } else {
                rejected.push(label);
            }
        }
        Self { maps, rejected }
    }

    /// Default sizes: 64 decomposable and 16 hardened maps.
    pub fn default_for(m: usize, seed: u64) -> Self {
        Self::sampled(m, seed, 64, 16)
    }

    /// Only `ι` and `t`.
    pub fn minimal(m: usize) -> Self {
        Self::sampled(m, 0, 0, 0)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum SweepOutcome {
    Pass { checked: usize, min_value: f64 },
    Fail { label: String, verdict: SepVerdict },
}

impl SweepOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, SweepOutcome::Pass { .. })
    }
}

/// Tests `(ι ⊗ ψ*)(h) ≥ -tol` for every `ψ` in the family; stops at the first violation.
pub fn witness_sweep(h: &Functional, family: &WitnessFamily, tol: f64) -> Result<SweepOutcome> {
    let (x, _, m) = normalized(h)?;
    let mut min_value = f64::INFINITY;
    for (label, psi) in &family.maps {
        if psi.dim_out() != m || psi.dim_in() != m {
            return Err(Error::DimensionMismatch(format!(
                "witness {label} acts on M_{} but the second factor is M_{m}",
                psi.dim_in()
            )));
        }
        let kind = WitnessKind::Map {
            label: label.clone(),
            map: psi.clone(),
        };
        let w = witness_density(&x, &kind)?;
        let (min, v) = lowest_pair(&w);
        min_value = min_value.min(min);
        if min < -tol {
            return Ok(SweepOutcome::Fail {
                label: label.clone(),
                verdict: SepVerdict {
                    verdict: Verdict::Entangled,
                    certificate: Certificate::WitnessViolation {
                        witness: kind,
                        value: min,
                        vector: vec_to_pairs(&v),
                    },
                },
            });
        }
    }
    Ok(SweepOutcome::Pass {
        checked: family.maps.len(),
        min_value,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    pub eps: f64,
    pub max_iter: usize,
    /// Random restarts of the linear minimisation oracle per iteration.
    pub restarts: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// Stop before `max_iter` once the duality gap shows `eps` is out of reach.
    pub stop_on_bound: bool,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            max_iter: 10_000,
            restarts: 20,
            sweeps: 100,
            seed: 0,
            stop_on_bound: true,
        }
    }
}

struct Atom {
    u: DVector<C64>,
    v: DVector<C64>,
    w: DVector<C64>,
    weight: f64,
}

impl Atom {
    fn new(u: DVector<C64>, v: DVector<C64>) -> Self {
        let w = u.kronecker(&v);
        Self { u, v, w, weight: 0.0 }
    }
}

fn expectation(g: &DMatrix<C64>, w: &DVector<C64>) -> f64 {
    (w.adjoint() * g * w)[(0, 0)].re
}

fn re_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Fully corrective conditional gradient for `min ‖h - σ‖_F²` over convex combinations of
/// pure product states: each new atom from the oracle is followed by a re-optimisation of
/// all weights. Returns `Separable` once the residual is at most `eps`.
pub fn decompose_separable(h: &Functional, opts: &DecomposeOptions) -> Result<SepVerdict> {
    let (x, n, m) = normalized(h)?;
    let (min, _) = lowest_pair(&x);
    if min < -1e-9 {
        return Err(Error::NotPsd { min_eig: min });
    }
    let target = x.inner().clone();
    let h_sq = target.norm_squared();
    let mut rng = rng_from_seed(opts.seed);
    let restarts = opts.restarts.max(1);

    // first atom: best product overlap with h
    let neg = -&target;
    let first = product_opt::minimize(&neg, n, m, restarts, opts.sweeps, &[], &mut rng);
    let mut ws = WeightSystem::default();
    ws.push(Atom::new(first.u, first.v), &target);
    ws.atoms[0].weight = 1.0;
    let mut last_v = ws.atoms[0].v.clone();
    let mut residual = ws.residual_sq(h_sq).max(0.0).sqrt();
    let mut best_residual = residual;
    let mut iterations = 1;
    let max_atoms = 4 * (n * m) * (n * m);
    let mut lower_bound = None;

    while residual > opts.eps && iterations < opts.max_iter {
        iterations += 1;
        let sigma = rebuild(&ws.atoms, n * m);
        let g = &sigma - &target;
        let mut warm = vec![last_v.clone()];
        let mut order: Vec<usize> = (0..ws.atoms.len()).collect();
        order.sort_by(|&a, &b| ws.atoms[b].weight.partial_cmp(&ws.atoms[a].weight).unwrap());
        warm.extend(order.iter().take(3).map(|&k| ws.atoms[k].v.clone()));
        let mut s = product_opt::minimize(&g, n, m, restarts, opts.sweeps, &warm, &mut rng);
        // <R, s - σ> with R = h - σ
        let g_sigma = re_inner(&g, &sigma);
        let mut gap = -s.value + g_sigma;
        // f* >= f(σ) - gap when the oracle is exact
        if opts.stop_on_bound && residual * residual - gap > opts.eps * opts.eps {
            let deep = product_opt::minimize(&g, n, m, 10 * restarts, opts.sweeps, &warm, &mut rng);
            if deep.value < s.value {
                s = deep;
                gap = -s.value + g_sigma;
            }
            if residual * residual - gap > opts.eps * opts.eps {
                lower_bound = Some((residual * residual - gap).sqrt());
                break;
            }
        }
        if gap <= STALL_GAP {
            continue;
        }
        last_v = s.v.clone();
        let cand = Atom::new(s.u, s.v);
        if !ws.atoms.iter().any(|a| a.w.dotc(&cand.w).norm_sqr() > 1.0 - MERGE_GAP) {
            ws.push(cand, &target);
        }
        ws.correct(1000, (0.1 * gap).max(1e-18));
        ws.cap(max_atoms);
        residual = ws.residual_sq(h_sq).max(0.0).sqrt();
        best_residual = best_residual.min(residual);
    }
    let atoms = ws.atoms;

    if residual > opts.eps {
        return Ok(SepVerdict {
            verdict: Verdict::Undetermined,
            certificate: Certificate::BudgetExhausted {
                iterations,
                best_residual,
                distance_lower_bound: lower_bound,
            },
        });
    }

    let mut terms = to_terms(&atoms, PRUNE_WEIGHT);
    let mut check = verify_decomposition(&x, &terms, opts.eps);
    if !check.ok {
        terms = to_terms(&atoms, 0.0);
        check = verify_decomposition(&x, &terms, opts.eps);
    }
    Ok(SepVerdict {
        verdict: Verdict::Separable,
        certificate: Certificate::ProductDecomposition {
            terms,
            residual: check.recomputed,
            eps: opts.eps,
            iterations,
        },
    })
}

/// Atoms with the Gram matrix `Q_ij = |<w_i|w_j>|²` and overlaps `c_i = <w_i|h|w_i>`, so that
/// `‖h - Σ λ_i |w_i><w_i|‖² = λᵀQλ - 2cᵀλ + ‖h‖²`.
#[derive(Default)]
struct WeightSystem {
    atoms: Vec<Atom>,
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl WeightSystem {
    fn push(&mut self, a: Atom, target: &DMatrix<C64>) {
        let row: Vec<f64> = self.atoms.iter().map(|b| b.w.dotc(&a.w).norm_sqr()).collect();
        for (r, v) in self.q.iter_mut().zip(&row) {
            r.push(*v);
        }
        let mut own = row;
        own.push(a.w.norm_squared().powi(2));
        self.q.push(own);
        self.c.push(expectation(target, &a.w));
        self.atoms.push(a);
    }

    fn residual_sq(&self, h_sq: f64) -> f64 {
        let k = self.atoms.len();
        let mut s = h_sq;
        for i in 0..k {
            let wi = self.atoms[i].weight;
            if wi == 0.0 {
                continue;
            }
            s -= 2.0 * self.c[i] * wi;
            for j in 0..k {
                s += wi * self.q[i][j] * self.atoms[j].weight;
            }
        }
        s
    }

    /// Drops the lightest atoms beyond `max` and renormalises.
    fn cap(&mut self, max: usize) {
        if self.atoms.len() <= max {
            return;
        }
        let mut order: Vec<usize> = (0..self.atoms.len()).collect();
        order.sort_by(|&a, &b| self.atoms[b].weight.partial_cmp(&self.atoms[a].weight).unwrap());
        let mut keep = vec![false; self.atoms.len()];
        for &i in order.iter().take(max) {
            keep[i] = true;
        }
        self.retain(&keep);
        let total: f64 = self.atoms.iter().map(|a| a.weight).sum();
        for a in self.atoms.iter_mut() {
            a.weight /= total;
        }
    }

    fn retain(&mut self, keep: &[bool]) {
        let idx: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
        self.q = idx.iter().map(|&i| idx.iter().map(|&j| self.q[i][j]).collect()).collect();
        self.c = idx.iter().map(|&i| self.c[i]).collect();
        let mut atoms = std::mem::take(&mut self.atoms);
        let mut i = 0;
        atoms.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.atoms = atoms;
    }

    /// Pairwise steps on the weight simplex with exact line search, then drops atoms
    /// whose weight reached zero.
    fn correct(&mut self, max_steps: usize, tol: f64) {
        let k = self.atoms.len();
        let w: Vec<f64> = self.atoms.iter().map(|a| a.weight).collect();
        let mut w = w;
        // half-gradient Qw - c
        let mut g: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| self.q[i][j] * w[j]).sum::<f64>() - self.c[i])
            .collect();
        for _ in 0..max_steps {
            let s = (0..k).min_by(|&a, &b| g[a].partial_cmp(&g[b]).unwrap()).unwrap();
            let a = (0..k)
                .filter(|&i| w[i] > 0.0)
                .max_by(|&p, &q| g[p].partial_cmp(&g[q]).unwrap())
                .unwrap();
            let gap = g[a] - g[s];
            if gap <= tol || a == s {
                break;
            }
            let curv = self.q[s][s] + self.q[a][a] - 2.0 * self.q[s][a];
            let gamma = if curv > 0.0 { (gap / curv).min(w[a]) } else { w[a] };
            if gamma <= 0.0 {
                break;
            }
            w[s] += gamma;
            w[a] = if gamma >= w[a] { 0.0 } else { w[a] - gamma };
            for (i, gi) in g.iter_mut().enumerate() {
                *gi += gamma * (self.q[i][s] - self.q[i][a]);
            }
        }
        let mut keep = Vec::with_capacity(k);
        for (i, wi) in w.iter().enumerate() {
            self.atoms[i].weight = *wi;
            keep.push(*wi > 0.0);
        }
        if keep.iter().all(|&b| b) {
            return;
        }
        self.retain(&keep);
    }
}

fn rebuild(atoms: &[Atom], dim: usize) -> DMatrix<C64> {
    if atoms.is_empty() {
        return DMatrix::from_element(dim, dim, ZERO);
    }
    let w = DMatrix::from_fn(dim, atoms.len(), |r, k| atoms[k].w[r] * atoms[k].weight.sqrt());
    &w * w.adjoint()
}

fn to_terms(atoms: &[Atom], floor: f64) -> Vec<ProductTerm> {
    let kept: Vec<&Atom> = atoms.iter().filter(|a| a.weight > floor).collect();
    let total: f64 = kept.iter().map(|a| a.weight).sum();
    let mut terms: Vec<ProductTerm> = kept
        .iter()
        .map(|a| ProductTerm {
            weight: a.weight / total,
            a: ComplexMatrix::outer(&a.u),
            b: ComplexMatrix::outer(&a.v),
        })
        .collect();
    terms.sort_by(|p, q| q.weight.partial_cmp(&p.weight).unwrap());
    terms
}

fn ppt_verdict(x: &ComplexMatrix) -> Result<Option<SepVerdict>> {
    let (min, v) = lowest_pair(x);
    if min < -1e-9 {
        return Ok(Some(SepVerdict {
            verdict: Verdict::Entangled,
            certificate: Certificate::WitnessViolation {
                witness: WitnessKind::Positivity,
                value: min,
                vector: vec_to_pairs(&v),
            },
        }));
    }
    let (min, v) = lowest_pair(&partial_transpose(x, Subsystem::B)?);
    if min < -1e-9 {
        return Ok(Some(SepVerdict {
            verdict: Verdict::Entangled,
            certificate: Certificate::WitnessViolation {
                witness: WitnessKind::PartialTranspose,
                value: min,
                vector: vec_to_pairs(&v),
            },
        }));
    }
    Ok(None)
}

/// Certificate for a density that is not positive or fails the partial-transpose test.
pub fn ppt_certificate(h: &Functional) -> Result<Option<SepVerdict>> {
    let (x, _, _) = normalized(h)?;
    ppt_verdict(&x)
}

/// Dimension pairs in which positive partial transpose is equivalent to separability.
pub fn ppt_is_exact(n: usize, m: usize) -> bool {
    matches!((n.min(m), n.max(m)), (1, _) | (2, 2) | (2, 3))
}

/// Exact decision in `2⊗2`, `2⊗3` and `3⊗2`: PPT failure gives a witness, PPT success a
/// decomposition. A failed decomposition of a PPT density is an internal inconsistency.
pub fn exact_low_dim_oracle(h: &Functional, opts: &DecomposeOptions) -> Result<SepVerdict> {
    let (x, n, m) = normalized(h)?;
    if !ppt_is_exact(n, m) {
        return Err(Error::UnsupportedDims(n, m));
    }
    if let Some(v) = ppt_verdict(&x)? {
        return Ok(v);
    }
    let v = decompose_separable(h, opts)?;
    if !v.is_separable() {
        return Err(Error::Inconsistency(format!(
            "PPT density in {n}x{m} was not decomposed: {:?}",
            v.certificate
        )));
    }
    Ok(v)
}

/// Full decision pipeline.
#[derive(Debug)]
pub struct SepOracle {
    pub decompose: DecomposeOptions,
    pub tol: f64,
    /// Witness family for dimensions without an exact criterion; `None` skips the sweep.
    pub witness_sizes: Option<(usize, usize)>,
    families: Mutex<BTreeMap<usize, Arc<WitnessFamily>>>,
}

impl Clone for SepOracle {
    fn clone(&self) -> Self {
        Self {
            decompose: self.decompose.clone(),
            tol: self.tol,
            witness_sizes: self.witness_sizes,
            families: Mutex::new(BTreeMap::new()),
        }
    }
}

impl Default for SepOracle {
    fn default() -> Self {
        Self {
            decompose: DecomposeOptions::default(),
            tol: 1e-9,
            witness_sizes: Some((64, 16)),
            families: Mutex::new(BTreeMap::new()),
        }
    }
}

impl SepOracle {
    pub fn with_seed(seed: u64) -> Self {
        let mut o = Self::default();
        o.decompose.seed = seed;
        o
    }

    /// The sampled witness family on `M_m`, built once per dimension.
    pub fn family(&self, m: usize) -> Option<Arc<WitnessFamily>> {
        let (dec, hard) = self.witness_sizes?;
        let mut cache = self.families.lock().unwrap_or_else(|e| e.into_inner());
        Some(
            cache
                .entry(m)
                .or_insert_with(|| Arc::new(WitnessFamily::sampled(m, self.decompose.seed, dec, hard)))
                .clone(),
        )
    }

    /// Positivity, then PPT; in low dimensions a decomposition that must succeed;
    /// elsewhere realignment, a witness sweep and a bounded decomposition search.
    pub fn classify(&self, h: &Functional) -> Result<SepVerdict> {
        let (x, n, m) = normalized(h)?;
        if let Some(v) = ppt_verdict(&x)? {
            return Ok(v);
        }
        if ppt_is_exact(n, m) {
            return exact_low_dim_oracle(h, &self.decompose);
        }
        let r = realignment_value(&x)?;
        if r > 1.0 + self.tol.max(1e-9) {
            return Ok(SepVerdict {
                verdict: Verdict::Entangled,
                certificate: Certificate::RealignmentViolation { value: r },
            });
        }
        if let Some(family) = self.family(m) {
            if let SweepOutcome::Fail { verdict, .. } = witness_sweep(h, &family, self.tol)? {
                return Ok(verdict);
            }
        }
        decompose_separable(h, &self.decompose)
    }
}

/// Counts from the two-sided cone comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma9Report {
    pub algebra_dim: usize,
    pub ambient_dim: usize,
    pub dim_h: usize,
    pub witness_maps: usize,
    /// Elements `Σ a_i ⊗ b_i` with `a_i ∈ A⁺`, `b_i ≥ 0`.
    pub positive_sums: usize,
    pub positive_sums_passing: usize,
    /// Sampled elements of `A ⊗ B(H)`.
    pub sampled: usize,
    pub passing_sweep: usize,
    pub decomposed: usize,
    /// Passed the sweep but no certificate with factors in `A` was found.
    pub failures: usize,
    pub worst_residual: f64,
    pub worst_projection_residual: f64,
}

/// Samples both inclusions between `A⁺ ⊗ B(H)⁺` and the cone cut out by the witnesses.
pub fn lemma9_harness(a: &StarAlgebra, dim_h: usize, samples: usize, seed: u64, opts: &DecomposeOptions) -> Result<Lemma9Report> {
    let k = a.ambient_dim();
    if k > dim_h {
        return Err(Error::DimensionHypothesis { dim_k: k, dim_h });
    }
    let e = a.conditional_expectation()?;
    let family = if ppt_is_exact(k, dim_h) {
        WitnessFamily::minimal(dim_h)
    } else {
        WitnessFamily::default_for(dim_h, seed)
    };
    let mut rng = rng_from_seed(seed);
    let mut rep = Lemma9Report {
        algebra_dim: a.dim(),
        ambient_dim: k,
        dim_h,
        witness_maps: family.len(),
        positive_sums: samples,
        positive_sums_passing: 0,
        sampled: samples,
        passing_sweep: 0,
        decomposed: 0,
        failures: 0,
        worst_residual: 0.0,
        worst_projection_residual: 0.0,
    };

    for _ in 0..samples {
        let terms = rng.random_range(1..=3);
        let mut x = ComplexMatrix::zeros(k * dim_h, k * dim_h);
        for _ in 0..terms {
            let y = random_element(a, &mut rng);
            let ap = &y.adjoint() * &y;
            let b = random::psd(dim_h, rng.random_range(1..=dim_h), &mut rng);
            x = x + tensor(&ap, &b);
        }
        let h = Functional::bipartite(x, k, dim_h)?;
        if witness_sweep(&h, &family, 1e-9)?.passed() {
            rep.positive_sums_passing += 1;
        }
    }

    for s in 0..samples {
        let rank = rng.random_range(1..=k * dim_h);
        let g = random::density(k * dim_h, rank, &mut rng).with_dims(k, dim_h)?;
        let x = e.ampliate_left(&g)?;
        let h = Functional::bipartite(x.clone(), k, dim_h)?;
        if !witness_sweep(&h, &family, 1e-9)?.passed() {
            continue;
        }
        rep.passing_sweep += 1;
        let o = DecomposeOptions {
            seed: opts.seed.wrapping_add(s as u64),
            ..opts.clone()
        };
        let v = decompose_separable(&h, &o)?;
        let Certificate::ProductDecomposition { terms, .. } = &v.certificate else {
            rep.failures += 1;
            continue;
        };
        // push the first factors into A; the result stays a decomposition of x
        let projected: Vec<ProductTerm> = terms
            .iter()
            .map(|t| ProductTerm {
                weight: t.weight,
                a: e.apply(&t.a).expect("square factor"),
                b: t.b.clone(),
            })
            .collect();
        let proj = projected
            .iter()
            .map(|t| a.projection_residual(&t.a))
            .fold(0.0, f64::max);
        rep.worst_projection_residual = rep.worst_projection_residual.max(proj);
        let (xn, _, _) = normalized(&h)?;
        let check = verify_decomposition(&xn, &projected, o.eps);
        rep.worst_residual = rep.worst_residual.max(check.recomputed);
        if check.ok {
            rep.decomposed += 1;
        } else {
            rep.failures += 1;
        }
    }
    Ok(rep)
}

/// Seeded search for a density with positive partial transpose that the realignment
/// criterion detects as entangled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSearch {
    pub seed: u64,
    pub family: String,
    pub candidates_tried: usize,
    pub log: Vec<String>,
    pub found: Option<FoundFixture>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoundFixture {
    pub candidate: usize,
    pub noise: f64,
    pub ppt_min_eig: f64,
    pub realignment: f64,
    pub density: Functional,
}

fn tiles_upb_state() -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket = |v: [f64; 3]| DVector::from_iterator(3, v.iter().map(|&x| C64::new(x, 0.0)));
    let e = [ket([1.0, 0.0, 0.0]), ket([0.0, 1.0, 0.0]), ket([0.0, 0.0, 1.0])];
    let minus01 = ket([s, -s, 0.0]);
    let minus12 = ket([0.0, s, -s]);
    let plus = ket([1.0 / 3f64.sqrt(); 3]);
    let vecs = [
        e[0].kronecker(&minus01),
        minus01.kronecker(&e[2]),
        e[2].kronecker(&minus12),
        minus12.kronecker(&e[0]),
        plus.kronecker(&plus),
    ];
    let mut p = DMatrix::<C64>::identity(9, 9);
    for v in &vecs {
        p -= v * v.adjoint();
    }
    ComplexMatrix::from_dmatrix(p * C64::new(0.25, 0.0))
}

/// Candidates are the unextendible-product-basis "tiles" state in `3⊗3` under random
/// local unitaries, mixed with white noise of random weight in `[0.005, 0.05]`.
pub fn search_ppt_entangled(seed: u64, budget: usize) -> Result<FixtureSearch> {
    let mut rng = rng_from_seed(seed);
    let base = tiles_upb_state();
    let mut out = FixtureSearch {
        seed,
        family: "tiles UPB complement in 3x3, local unitaries, white noise in [0.005, 0.05]".into(),
        candidates_tried: 0,
        log: Vec::new(),
        found: None,
    };
    for c in 0..budget {
        out.candidates_tried = c + 1;
        let noise: f64 = rng.random_range(0.005..0.05);
        let u = tensor(&random::unitary(3, &mut rng), &random::unitary(3, &mut rng));
        let rho = (&u * &base * &u.adjoint()).scale_re(1.0 - noise) + ComplexMatrix::identity(9).scale_re(noise / 9.0);
        let h = Functional::bipartite(rho.hermitian_part(), 3, 3)?;
        let ppt = ppt_check(&h, 1e-12)?;
        let re = realignment_check(&h, 1e-6)?;
        out.log.push(format!(
            "candidate {c}: noise {noise:.6}, ppt min eig {:.6e}, realignment {:.9}",
            ppt.min_eig, re.value
        ));
        if ppt.passed && !re.passed {
            out.found = Some(FoundFixture {
                candidate: c,
                noise,
                ppt_min_eig: ppt.min_eig,
                realignment: re.value,
                density: h,
            });
            break;
        }
    }
    Ok(out)
}

/// Maximally entangled two-qubit density.
pub fn bell_state() -> Functional {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = DVector::from_vec(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]);
    Functional::bipartite(ComplexMatrix::outer(&v), 2, 2).unwrap()
}
