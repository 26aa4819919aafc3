use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn posmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posmap"))
        .args(args)
        .current_dir(fixtures())
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn bell_state_is_entangled_with_transpose_witness() {
    let out = posmap(&["sep-check", "--dims", "2,2", "--input", "bell.json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let verdict = &v["result"]["verdict"];
    assert_eq!(verdict["verdict"], "Entangled");
    assert_eq!(verdict["certificate"]["witness"]["kind"], "PartialTranspose");
    let lam = verdict["certificate"]["value"].as_f64().unwrap();
    assert!((lam + 0.5).abs() < 1e-12, "{lam}");
    assert_eq!(v["result"]["verification"]["ok"], true);
}

#[test]
fn pinching_definite_set_has_dimension_two() {
    let out = posmap(&["definite-set", "--input", "pinching2.json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["algebra"]["basis"].as_array().unwrap().len(), 2);
}

#[test]
fn malformed_json_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"dim_in\": 2, ").unwrap();
    let out = posmap(&["choi", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_input_and_bad_dims_exit_with_two() {
    assert_eq!(posmap(&["choi"]).status.code(), Some(2));
    assert_eq!(posmap(&["choi", "--input", "no_such_file.json"]).status.code(), Some(2));
    assert_eq!(posmap(&["sep-check", "--dims", "2,3", "--input", "bell.json"]).status.code(), Some(2));
    assert_eq!(posmap(&["sep-check", "--dims", "4", "--input", "bell.json"]).status.code(), Some(2));
    assert_eq!(posmap(&["sep-check", "--criteria", "bogus", "--input", "bell.json"]).status.code(), Some(2));
}

#[test]
fn non_unital_map_is_rejected_by_definite_set() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.json");
    let out = posmap(&["random-map", "--kind", "cp", "--n", "2", "--seed", "5", "--out", map.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = posmap(&["definite-set", "--input", map.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let a = posmap(&["prop7-verify", "--input", "prop7_instance.json"]);
    let b = posmap(&["prop7-verify", "--input", "prop7_instance.json", "--out", path.to_str().unwrap()]);
    assert!(b.stdout.is_empty());
    assert_eq!(a.stdout, std::fs::read(&path).unwrap());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["sep-check", "--input", "ppt_entangled.json", "--criteria", "ppt,realign,witness", "--seed", "3"];
    let a = posmap(&args);
    let b = posmap(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let a = posmap(&["tower-scan", "--A-dim", "2", "--K", "1", "--kind", "separable", "--seed", "4"]);
    let b = posmap(&["tower-scan", "--A-dim", "2", "--K", "1", "--kind", "separable", "--seed", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn table_format_lists_the_verdict() {
    let out = posmap(&["sep-check", "--input", "bell.json", "--format", "table"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("result.verdict.verdict") && l.ends_with("Entangled")));
}

const GOLDEN: &[(&str, &[&str])] = &[
    ("sep_check_bell", &["sep-check", "--dims", "2,2", "--input", "bell.json"]),
    ("definite_set_pinching", &["definite-set", "--input", "pinching2.json"]),
    ("dual_pinching", &["dual", "--input", "pinching2.json"]),
    ("average_pinching", &["average", "--input", "pinching2.json"]),
    ("prop7_verify", &["prop7-verify", "--input", "prop7_instance.json"]),
    ("random_map_eb", &["random-map", "--kind", "eb", "--n", "2", "--m", "3", "--seed", "11"]),
];

/// Set `POSMAP_BLESS=1` to rewrite the golden files.
#[test]
fn golden_reports() {
    let bless = std::env::var_os("POSMAP_BLESS").is_some();
    let mut stale = Vec::new();
    for (name, args) in GOLDEN {
        let out = posmap(args);
        assert_eq!(out.status.code(), Some(0), "{name}");
        let path = fixtures().join("golden").join(format!("{name}.json"));
        if bless {
            std::fs::write(&path, &out.stdout).unwrap();
        } else if std::fs::read(&path).ok().as_deref() != Some(&out.stdout[..]) {
            stale.push(*name);
        }
    }
    assert!(stale.is_empty(), "golden reports differ: {stale:?}");
}
