use std::path::Path;

use posmap_core::abelian::{build_projection, centralizer_check, dual_identity_check};
use posmap_core::averaging::{average, corollary5_harness, invariant_state, DEFAULT_CESARO_TOL, DEFAULT_MAX_N};
use posmap_core::definite::{definite_set, theorem4_harness};
use posmap_core::maps::generators;
use posmap_core::matrix::tensor;
use posmap_core::separability::{
    decompose_separable, lemma9_harness, ppt_certificate, ppt_check, realignment_check, witness_sweep, Certificate,
    DecomposeOptions, SepOracle, SepVerdict, SweepOutcome, Verdict, WitnessFamily,
};
use posmap_core::tower::{sample_state, theorem8_scan, TowerSample, TowerState, TowerWitnesses};
use posmap_core::{ComplexMatrix, Error, Functional, LinMap, StarAlgebra};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::report::{envelope, render};
use crate::{Cli, Command, Common, Criterion, Lemma9Args, MapKind, RandomMapArgs, SampleKind, SepCheckArgs, TowerScanArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    if !(c.tol.is_finite() && c.tol > 0.0) || !(c.eps.is_finite() && c.eps > 0.0) {
        return Err(CliError::Usage("--tol and --eps must be positive".into()));
    }
    let (name, result) = match &cli.command {
        Command::Choi => ("choi", choi(c)?),
        Command::Dual => ("dual", dual(c)?),
        Command::DefiniteSet => ("definite-set", to_value(definite_set(&read_map(c)?)?)),
        Command::Theorem4 => ("theorem4", to_value(theorem4_harness(&read_map(c)?, &oracle(c))?)),
        Command::Average => ("average", average_cmd(c)?),
        Command::Prop7Verify => ("prop7-verify", prop7(c)?),
        Command::SepCheck(a) => ("sep-check", sep_check(c, a)?),
        Command::Lemma9(a) => ("lemma9", lemma9(c, a)?),
        Command::TowerScan(a) => ("tower-scan", tower_scan(c, a)?),
        Command::RandomMap(a) => ("random-map", random_map(c, a)?),
    };
    let text = render(&envelope(name, c, result), c.format);
    match &c.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_value(x: impl Serialize) -> Value {
    serde_json::to_value(x).expect("reports serialise")
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn input<T: DeserializeOwned>(c: &Common) -> Result<T> {
    let path = c.input.as_ref().ok_or_else(|| CliError::Usage("this command needs --input".into()))?;
    read_json(path)
}

/// A map given by its Choi matrix, by Kraus operators, or as a `random-map` report.
#[derive(Deserialize)]
#[serde(untagged)]
enum MapInput {
    Choi(LinMap),
    Kraus { kraus: Vec<ComplexMatrix> },
    Report { result: LinMap },
}

fn read_map(c: &Common) -> Result<LinMap> {
    Ok(match input::<MapInput>(c)? {
        MapInput::Choi(m) => m,
        MapInput::Kraus { kraus } => LinMap::from_kraus(&kraus)?,
        MapInput::Report { result } => result,
    })
}

fn decompose_options(c: &Common) -> DecomposeOptions {
    let mut o = DecomposeOptions {
        eps: c.eps,
        seed: c.seed,
        ..DecomposeOptions::default()
    };
    if let Some(n) = c.max_iter {
        o.max_iter = n;
    }
    o
}

fn oracle(c: &Common) -> SepOracle {
    let mut o = SepOracle::with_seed(c.seed);
    o.decompose = decompose_options(c);
    o.tol = c.tol;
    o
}

fn choi(c: &Common) -> Result<Value> {
    let phi = read_map(c)?;
    Ok(json!({
        "dim_in": phi.dim_in(),
        "dim_out": phi.dim_out(),
        "choi": phi.choi(),
        "choi_min_eigenvalue": phi.choi_min_eigenvalue(),
        "hermitian_preserving": phi.is_hermitian_preserving(c.tol),
        "completely_positive": phi.is_cp(c.tol),
        "unital_residual": phi.unital_residual(),
        "trace_preserving_residual": phi.trace_preserving_residual(),
    }))
}

fn dual(c: &Common) -> Result<Value> {
    let phi = read_map(c)?;
    let f = phi.dual_functional();
    let (n, m) = (phi.dim_in(), phi.dim_out());
    let mut residual: f64 = 0.0;
    for r in 0..n * n {
        let a = ComplexMatrix::unit(n, r / n, r % n);
        let image = phi.apply(&a)?;
        for s in 0..m * m {
            let b = ComplexMatrix::unit(m, s / m, s % m);
            let expected = (&image * &b.transpose()).trace();
            residual = residual.max((f.eval(&tensor(&a, &b)) - expected).norm());
        }
    }
    Ok(json!({ "functional": f, "duality_residual": residual }))
}

fn average_cmd(c: &Common) -> Result<Value> {
    let phi = read_map(c)?;
    let max_n = c.max_iter.map_or(DEFAULT_MAX_N, |n| n as u64);
    let report = average(&phi, DEFAULT_CESARO_TOL, max_n)?;
    let faithful = invariant_state(&phi)?.faithful;
    let corollary5 = if faithful {
        Some(corollary5_harness(&phi, &oracle(c))?)
    } else {
        None
    };
    Ok(json!({ "averaging": report, "corollary5": corollary5 }))
}

#[derive(Deserialize)]
struct Prop7Input {
    rho: Functional,
    projections: Vec<ComplexMatrix>,
}

fn prop7(c: &Common) -> Result<Value> {
    let inp: Prop7Input = input(c)?;
    let centralizer = centralizer_check(&inp.rho, &inp.projections)?;
    let data = build_projection(&inp.rho, &inp.projections)?;
    let dual_identity = dual_identity_check(&data)?;
    let certificate = data.separable_certificate();
    let verified = certificate.verify(&data.p.dual_functional())?.ok;
    Ok(json!({
        "centralizer_residual": centralizer,
        "dual_identity_residual": dual_identity,
        "data": data,
        "entanglement_breaking": { "certificate": certificate, "verified": verified },
    }))
}

/// A state given directly, or under `density` as in the fixture files.
#[derive(Deserialize)]
#[serde(untagged)]
enum StateInput {
    Bare(Functional),
    Wrapped { density: Functional },
}

#[derive(Serialize)]
struct CriterionResult {
    criterion: String,
    passed: Option<bool>,
    value: Option<f64>,
    verdict: Option<SepVerdict>,
}

fn sep_check(c: &Common, a: &SepCheckArgs) -> Result<Value> {
    let mut h = match input::<StateInput>(c)? {
        StateInput::Bare(h) | StateInput::Wrapped { density: h } => h,
    };
    if let Some(d) = &a.dims {
        let [n, m] = d[..] else {
            return Err(CliError::Usage("--dims takes two values n,m".into()));
        };
        if h.bipartite_dims().is_some_and(|x| x != (n, m)) {
            return Err(Error::DimensionMismatch(format!("--dims {n},{m} against annotated {:?}", h.bipartite_dims())).into());
        }
        h = Functional::bipartite(h.density().clone().without_dims(), n, m)?;
    }
    let (n, m) = h.bipartite_dims().ok_or(Error::MissingDims)?;
    let opts = decompose_options(c);
    let mut results = Vec::new();
    let mut verdict: Option<SepVerdict> = None;
    for crit in &a.criteria {
        let r = match crit {
            Criterion::Ppt => {
                let p = ppt_check(&h, c.tol)?;
                CriterionResult {
                    criterion: crit.to_string(),
                    passed: Some(p.passed),
                    value: Some(p.min_eig),
                    verdict: ppt_certificate(&h)?,
                }
            }
            Criterion::Realign => {
                let r = realignment_check(&h, c.tol)?;
                CriterionResult {
                    criterion: crit.to_string(),
                    passed: Some(r.passed),
                    value: Some(r.value),
                    verdict: (!r.passed).then_some(SepVerdict {
                        verdict: Verdict::Entangled,
                        certificate: Certificate::RealignmentViolation { value: r.value },
                    }),
                }
            }
            Criterion::Witness => {
                let family = WitnessFamily::default_for(m, c.seed);
                match witness_sweep(&h, &family, c.tol)? {
                    SweepOutcome::Pass { min_value, .. } => CriterionResult {
                        criterion: crit.to_string(),
                        passed: Some(true),
                        value: Some(min_value),
                        verdict: None,
                    },
                    SweepOutcome::Fail { verdict, .. } => CriterionResult {
                        criterion: crit.to_string(),
                        passed: Some(false),
                        value: match &verdict.certificate {
                            Certificate::WitnessViolation { value, .. } => Some(*value),
                            _ => None,
                        },
                        verdict: Some(verdict),
                    },
                }
            }
            Criterion::Decompose => {
                if verdict.as_ref().is_some_and(|v| v.is_entangled()) {
                    CriterionResult {
                        criterion: crit.to_string(),
                        passed: None,
                        value: None,
                        verdict: None,
                    }
                } else {
                    let v = decompose_separable(&h, &opts)?;
                    let value = match &v.certificate {
                        Certificate::ProductDecomposition { residual, .. } => Some(*residual),
                        Certificate::BudgetExhausted { best_residual, .. } => Some(*best_residual),
                        _ => None,
                    };
                    CriterionResult {
                        criterion: crit.to_string(),
                        passed: Some(v.is_separable()),
                        value,
                        verdict: Some(v),
                    }
                }
            }
        };
        let decisive = r.verdict.as_ref().filter(|v| v.verdict != Verdict::Undetermined);
        if verdict.as_ref().is_none_or(|v| v.verdict == Verdict::Undetermined) {
            if let Some(v) = decisive.or(r.verdict.as_ref()) {
                verdict = Some(v.clone());
            }
        }
        results.push(r);
    }
    let verdict = verdict.unwrap_or(SepVerdict {
        verdict: Verdict::Undetermined,
        certificate: Certificate::BudgetExhausted {
            iterations: 0,
            best_residual: f64::NAN,
            distance_lower_bound: None,
        },
    });
    let verification = verdict.verify(&h)?;
    Ok(json!({
        "dims": [n, m],
        "criteria": results,
        "verdict": verdict,
        "verification": verification,
    }))
}

/// An algebra given by an orthonormal basis or by generators; the unit is always added to the generators.
#[derive(Deserialize)]
#[serde(untagged)]
enum AlgebraInput {
    Basis(StarAlgebra),
    Generators { generators: Vec<ComplexMatrix> },
}

fn lemma9(c: &Common, a: &Lemma9Args) -> Result<Value> {
    let alg = match input::<AlgebraInput>(c)? {
        AlgebraInput::Basis(x) => x,
        AlgebraInput::Generators { mut generators } => {
            let n = generators.first().map(|g| g.rows()).ok_or(CliError::Usage("no generators".into()))?;
            generators.push(ComplexMatrix::identity(n));
            StarAlgebra::span_closure(&generators)?
        }
    };
    let dim_h = a.dim_h.unwrap_or(alg.ambient_dim());
    Ok(to_value(lemma9_harness(&alg, dim_h, a.samples, c.seed, &decompose_options(c))?))
}

fn tower_scan(c: &Common, a: &TowerScanArgs) -> Result<Value> {
    let state = match &c.input {
        Some(path) => read_json::<TowerState>(path)
            .and_then(|s| Ok(TowerState::new(s.a_algebra, s.level_k, s.h.density().clone().without_dims())?))?,
        None => {
            let kind = match a.kind {
                SampleKind::Separable => TowerSample::Separable,
                SampleKind::Bell => TowerSample::Bell,
                SampleKind::ScalarA => TowerSample::ScalarA,
                SampleKind::Generic => TowerSample::Generic,
            };
            if a.level_k == 0 {
                return Err(CliError::Usage("--K must be at least 1".into()));
            }
            sample_state(kind, a.a_dim, a.level_k, c.seed)?.0
        }
    };
    let o = oracle(c);
    let witnesses = TowerWitnesses::from_oracle(state.level_k, &o)?;
    let report = theorem8_scan(&state, &o, &witnesses)?;
    Ok(json!({ "state": state, "scan": report }))
}

fn random_map(c: &Common, a: &RandomMapArgs) -> Result<Value> {
    let (n, m, size, seed) = (a.n, a.m.unwrap_or(a.n), a.size, c.seed);
    if n == 0 || m == 0 || n * m > 64 {
        return Err(CliError::Usage(format!("dimensions {n}, {m} outside 1..=64 in product")));
    }
    let square = || {
        if n == m {
            Ok(())
        } else {
            Err(CliError::Usage(format!("{:?} maps act on one algebra; got n = {n}, m = {m}", a.kind)))
        }
    };
    let map = match a.kind {
        MapKind::Cp => generators::random_cp(seed, n, m, size),
        MapKind::UnitalCp => {
            square()?;
            generators::random_unital_cp(seed, n, size)
        }
        MapKind::Eb => generators::random_eb(seed, n, m, size, n == m).map,
        MapKind::BlockEb => {
            square()?;
            generators::random_block_eb(seed, n).map
        }
        MapKind::Decomposable => generators::random_decomposable(seed, n, m, size),
        MapKind::Copositive => generators::random_copositive(seed, n, m, size),
        MapKind::Hardened => generators::random_hardened_positive(seed, n, m),
    };
    Ok(to_value(map))
}
