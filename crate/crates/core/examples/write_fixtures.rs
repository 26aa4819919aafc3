//! Regenerates the JSON files under `fixtures/`.

use std::path::{Path, PathBuf};

use posmap_core::abelian::block_projections;
use posmap_core::separability::{bell_state, search_ppt_entangled};
use posmap_core::{ComplexMatrix, Functional, LinMap};
use serde_json::json;

const PPT_SEED: u64 = 0;
const PPT_BUDGET: usize = 10;

fn write(dir: &Path, name: &str, value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).unwrap() + "\n";
    std::fs::write(dir.join(name), text).unwrap();
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    std::fs::create_dir_all(&dir).unwrap();

    write(&dir, "bell.json", &serde_json::to_value(bell_state()).unwrap());
    write(&dir, "pinching2.json", &serde_json::to_value(LinMap::pinching(2)).unwrap());

    let rho = Functional::single(ComplexMatrix::diag(&[0.2, 0.3, 0.5]), 3).unwrap();
    write(
        &dir,
        "prop7_instance.json",
        &json!({ "rho": rho, "projections": block_projections(&[1, 2]) }),
    );

    let search = search_ppt_entangled(PPT_SEED, PPT_BUDGET).unwrap();
    let found = search.found.as_ref().expect("the seeded search finds a candidate");
    write(
        &dir,
        "ppt_entangled.json",
        &json!({
            "seed": search.seed,
            "budget": PPT_BUDGET,
            "family": search.family,
            "candidate": found.candidate,
            "noise": found.noise,
            "ppt_min_eig": found.ppt_min_eig,
            "realignment": found.realignment,
            "search_log": search.log,
            "density": found.density,
        }),
    );
}
