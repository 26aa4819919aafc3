use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use posmap_core::averaging::spectral_projection;
use posmap_core::definite::definite_set;
use posmap_core::maps::generators;
use posmap_core::matrix::tensor;
use posmap_core::random::{density, rng_from_seed};
use posmap_core::separability::{decompose_separable, ppt_check, witness_sweep, DecomposeOptions, WitnessFamily};
use posmap_core::{ComplexMatrix, Functional};

fn separable_state(n: usize, m: usize, terms: usize, seed: u64) -> Functional {
    let mut rng = rng_from_seed(seed);
    let mut d = ComplexMatrix::zeros(n * m, n * m);
    for _ in 0..terms {
        d = &d + &tensor(&density(n, 1, &mut rng), &density(m, 1, &mut rng));
    }
    Functional::bipartite(d.scale_re(1.0 / terms as f64), n, m).unwrap()
}

fn maps(c: &mut Criterion) {
    let phi = generators::random_unital_cp(1, 4, 3);
    let x = density(4, 4, &mut rng_from_seed(2));
    c.bench_function("apply_4x4", |b| b.iter(|| phi.apply(black_box(&x)).unwrap()));
    c.bench_function("definite_set_4", |b| b.iter(|| definite_set(black_box(&phi)).unwrap()));
    c.bench_function("spectral_projection_4", |b| b.iter(|| spectral_projection(black_box(&phi)).unwrap()));
}

fn separability(c: &mut Criterion) {
    let h = separable_state(3, 3, 6, 3);
    let family = WitnessFamily::default_for(3, 0);
    c.bench_function("ppt_3x3", |b| b.iter(|| ppt_check(black_box(&h), 1e-9).unwrap()));
    c.bench_function("witness_sweep_3x3", |b| b.iter(|| witness_sweep(black_box(&h), &family, 1e-9).unwrap()));
    let opts = DecomposeOptions {
        eps: 1e-3,
        ..DecomposeOptions::default()
    };
    c.bench_function("decompose_3x3", |b| b.iter(|| decompose_separable(black_box(&h), &opts).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = maps, separability
}
criterion_main!(benches);
