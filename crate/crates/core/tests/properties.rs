use num_complex::Complex64 as C64;
use posmap_core::abelian::{block_instance, build_projection, dual_identity_check, random_partition};
use posmap_core::algebra::StarAlgebra;
use posmap_core::averaging::{invariant_state, spectral_projection};
use posmap_core::definite::{definite_algebra, definite_membership, definite_set, theorem4_harness};
use posmap_core::maps::generators;
use posmap_core::matrix::{herm_eig, min_eigenvalue, partial_trace, partial_transpose, tensor, Subsystem};
use posmap_core::random::{density, ginibre, hermitian, psd, rng_from_seed};
use posmap_core::separability::{
    ppt_check, witness_sweep, Certificate, ProductTerm, SepOracle, SepVerdict, Verdict, WitnessFamily,
};
use posmap_core::tower::{conditional_expectation_level, lift_map, transport_certificate};
use posmap_core::{ComplexMatrix, Functional, LinMap};
use proptest::prelude::*;

fn units(n: usize) -> impl Iterator<Item = ComplexMatrix> {
    (0..n * n).map(move |r| ComplexMatrix::unit(n, r / n, r % n))
}

fn superop_dist(a: &LinMap, b: &LinMap) -> f64 {
    (a.choi() - b.choi()).max_abs()
}

fn product_state(n: usize, m: usize, terms: usize, seed: u64) -> (Functional, Vec<ProductTerm>) {
    let mut rng = rng_from_seed(seed);
    let w = 1.0 / terms as f64;
    let terms: Vec<ProductTerm> = (0..terms)
        .map(|_| ProductTerm {
            weight: w,
            a: density(n, 1, &mut rng),
            b: density(m, 1, &mut rng),
        })
        .collect();
    let mut d = ComplexMatrix::zeros(n * m, n * m);
    for t in &terms {
        d = &d + &tensor(&t.a, &t.b).scale_re(t.weight);
    }
    (Functional::bipartite(d, n, m).unwrap(), terms)
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn trace_is_multiplicative_on_tensors(seed: u64, n in 1usize..5, m in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let (a, b) = (ginibre(n, n, &mut rng), ginibre(m, m, &mut rng));
        let lhs = tensor(&a, &b).trace();
        prop_assert!((lhs - a.trace() * b.trace()).norm() < 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn partial_transpose_laws(seed: u64, n in 1usize..4, m in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let x = ginibre(n * m, n * m, &mut rng).with_dims(n, m).unwrap();
        let pt = partial_transpose(&x, Subsystem::B).unwrap();
        prop_assert!(partial_transpose(&pt, Subsystem::B).unwrap().approx_eq(&x, 1e-14));
        let lhs = partial_transpose(&x.adjoint(), Subsystem::B).unwrap();
        prop_assert!(lhs.approx_eq(&pt.adjoint(), 1e-14));
        let traced = partial_trace(&pt, Subsystem::B).unwrap();
        prop_assert!(traced.approx_eq(&partial_trace(&x, Subsystem::B).unwrap(), 1e-12));
    }

    #[test]
    fn herm_eig_reconstructs(seed: u64, n in 1usize..65) {
        let x = hermitian(n, &mut rng_from_seed(seed));
        let e = herm_eig(&x).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let d = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            e.values.iter().map(|&v| C64::new(v, 0.0)),
        ));
        let back = ComplexMatrix::from_dmatrix(&e.vectors * d * e.vectors.adjoint());
        prop_assert!((&back - &x).frobenius_norm() <= 1e-10 * x.frobenius_norm().max(1.0));
    }

    #[test]
    fn conditional_expectation_is_a_unital_cp_projection(seed: u64, n in 2usize..5, gens in 1usize..3) {
        let mut rng = rng_from_seed(seed);
        let mut g: Vec<ComplexMatrix> = (0..gens).map(|_| psd(n, 1, &mut rng)).collect();
        g.push(ComplexMatrix::identity(n));
        let a = StarAlgebra::span_closure(&g).unwrap();
        let e = a.conditional_expectation().unwrap();
        prop_assert!(superop_dist(&e.compose(&e).unwrap(), &e) < 1e-8);
        prop_assert!(e.unital_residual() < 1e-8);
        prop_assert!(e.trace_preserving_residual() < 1e-8);
        prop_assert!(e.choi_min_eigenvalue() > -1e-8);
        let again = StarAlgebra::span_closure(a.basis()).unwrap();
        prop_assert_eq!(again.dim(), a.dim());
    }

    #[test]
    fn minimal_projections_of_abelian_algebras(seed: u64, n in 2usize..6) {
        let mut rng = rng_from_seed(seed);
        let sizes = random_partition(n, &mut rng);
        let a = StarAlgebra::span_of(n, &posmap_core::abelian::block_projections(&sizes)).unwrap();
        let p = a.minimal_projections().unwrap();
        prop_assert_eq!(p.len(), a.dim());
        let mut sum = ComplexMatrix::zeros(n, n);
        for (i, x) in p.iter().enumerate() {
            sum = &sum + x;
            prop_assert!(a.contains(x, 1e-8));
            for (j, y) in p.iter().enumerate() {
                let expected = if i == j { x.clone() } else { ComplexMatrix::zeros(n, n) };
                prop_assert!((x * y).approx_eq(&expected, 1e-8));
            }
        }
        prop_assert!(sum.approx_eq(&ComplexMatrix::identity(n), 1e-8));
    }

    #[test]
    fn dual_functional_pairs_with_transposed_choi(seed: u64, n in 1usize..4, m in 1usize..4) {
        let phi = generators::random_cp(seed, n, m, 2).add(&generators::random_copositive(seed ^ 1, n, m, 1).scale(-0.5)).unwrap();
        let f = phi.dual_functional();
        for a in units(n) {
            let image = phi.apply(&a).unwrap();
            for b in units(m) {
                let x = tensor(&a, &b);
                let expected = phi.choi().trace_product(&x.transpose());
                prop_assert!((f.eval(&x) - expected).norm() < 1e-10);
                prop_assert!((f.eval(&x) - (&image * &b.transpose()).trace()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_is_an_involution_preserving_cp(seed: u64, n in 1usize..4, m in 1usize..4) {
        let phi = generators::random_cp(seed, n, m, 2);
        let adj = phi.adjoint_map();
        prop_assert!(superop_dist(&adj.adjoint_map(), &phi) < 1e-14);
        prop_assert!(adj.choi_min_eigenvalue() > -1e-9);
        let mut rng = rng_from_seed(seed ^ 7);
        let (a, b) = (ginibre(n, n, &mut rng), ginibre(m, m, &mut rng));
        let lhs = phi.apply(&a).unwrap().hs_inner(&b);
        let rhs = a.hs_inner(&adj.apply(&b).unwrap());
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn global_transpose_keeps_products(seed: u64, n in 1usize..4, m in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let (a, b) = (ginibre(n, n, &mut rng), ginibre(m, m, &mut rng));
        prop_assert!(tensor(&a, &b).transpose().approx_eq(&tensor(&a.transpose(), &b.transpose()), 1e-14));
    }

    #[test]
    fn dual_of_composition_pulls_back(seed: u64, k in 1usize..4, n in 1usize..4, m in 1usize..4) {
        let beta = generators::random_cp(seed, k, n, 2);
        let phi = generators::random_decomposable(seed ^ 3, n, m, 2);
        let lhs = phi.compose(&beta).unwrap().dual_functional();
        let rhs = phi.dual_functional();
        let x = ginibre(k * m, k * m, &mut rng_from_seed(seed ^ 5)).with_dims(k, m).unwrap();
        let pulled = beta.ampliate_left(&x).unwrap();
        let (l, r) = (lhs.eval(&x), rhs.eval(&pulled));
        prop_assert!((l - r).norm() < 1e-10 * (1.0 + l.norm()));
    }

    #[test]
    fn witness_density_is_the_adjoint_ampliation(seed: u64, n in 1usize..4, m in 1usize..4) {
        let psi = generators::random_decomposable(seed, m, m, 2);
        let mut rng = rng_from_seed(seed ^ 9);
        let h = density(n * m, n * m, &mut rng).with_dims(n, m).unwrap();
        let x = ginibre(n * m, n * m, &mut rng).with_dims(n, m).unwrap();
        let lhs = h.trace_product(&psi.ampliate_right(&x).unwrap());
        let rhs = psi.adjoint_map().ampliate_right(&h).unwrap().trace_product(&x);
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn definite_sets_of_unital_cp_maps_close(seed: u64, n in 2usize..5, size in 1usize..4) {
        let phi = generators::random_unital_cp(seed, n, size);
        let report = definite_set(&phi).unwrap();
        prop_assert!(report.is_multiplicatively_closed);
        prop_assert!(report.closure_residual < 1e-7);
        for a in report.algebra.basis() {
            prop_assert!(definite_membership(&phi, a, 1e-7).unwrap());
        }
        let (alg, dilation) = definite_algebra(&phi).unwrap();
        for a in alg.basis() {
            prop_assert!(dilation.commutation_residual(a) < 1e-7);
        }
    }

    #[test]
    fn entanglement_breaking_maps_have_abelian_image(seed: u64, n in 2usize..4, block in any::<bool>()) {
        let phi = if block { generators::random_block_eb(seed, n).map } else { generators::random_eb(seed, n, n, 3, true).map };
        let report = definite_set(&phi).unwrap();
        prop_assert!(report.abelian_image);
    }

    #[test]
    fn conditions_i_and_iii_coincide(seed: u64) {
        let phi = generators::random_unital_cp(seed, 2, 2);
        let r = theorem4_harness(&phi, &SepOracle::default()).unwrap();
        prop_assert!(r.i_equals_iii);
        prop_assert_eq!(r.verdict_i.verdict, r.verdict_iii.verdict);
    }

    #[test]
    fn averaging_projection_invariants(seed: u64, n in 2usize..5, size in 2usize..4) {
        let phi = generators::random_unital_cp(seed, n, size);
        let p = spectral_projection(&phi).unwrap();
        prop_assert!(superop_dist(&p.compose(&p).unwrap(), &p) < 1e-8);
        prop_assert!(p.unital_residual() < 1e-8);
        prop_assert!(superop_dist(&phi.compose(&p).unwrap(), &p) < 1e-8);
        let inv = invariant_state(&phi).unwrap();
        let rho = &inv.state;
        for e in units(n) {
            prop_assert!((rho.eval(&p.apply(&e).unwrap()) - rho.eval(&e)).norm() < 1e-8);
        }
        if inv.faithful {
            let x = psd(n, 1, &mut rng_from_seed(seed ^ 11));
            let px = p.apply(&x).unwrap();
            prop_assert!(rho.eval(&px).re >= 0.5 * inv.min_eig * x.trace().re);
            prop_assert!(px.frobenius_norm() > 0.0);
        }
    }

    #[test]
    fn invariant_projection_is_reproduced(seed: u64, n in 2usize..6) {
        let mut rng = rng_from_seed(seed);
        let sizes = random_partition(n, &mut rng);
        let inst = block_instance(&sizes, &mut rng).unwrap();
        let data = build_projection(&inst.rho, &inst.projections).unwrap();
        prop_assert!(superop_dist(&data.p, &inst.q) < 1e-8);
        prop_assert!(dual_identity_check(&data).unwrap() < 1e-10);
        let cert = data.separable_certificate();
        prop_assert!(cert.verify(&data.p.dual_functional()).unwrap().ok);
    }

    #[test]
    fn transposition_keeps_ppt_verdicts(seed: u64, n in 2usize..4, m in 2usize..4, p in 0.0f64..1.0) {
        let mut rng = rng_from_seed(seed);
        let pure = density(n * m, 1, &mut rng);
        let d = &pure.scale_re(p) + &ComplexMatrix::identity(n * m).scale_re((1.0 - p) / (n * m) as f64);
        let h = Functional::bipartite(d, n, m).unwrap();
        let a = ppt_check(&h, 1e-9).unwrap();
        let b = ppt_check(&h.transposed(), 1e-9).unwrap();
        prop_assert_eq!(a.passed, b.passed);
        prop_assert!((a.min_eig - b.min_eig).abs() < 1e-10);
    }

    #[test]
    fn product_certificates_transpose_factorwise(seed: u64, n in 2usize..4, m in 2usize..4, terms in 1usize..5) {
        let (h, terms) = product_state(n, m, terms, seed);
        let transposed = terms
            .iter()
            .map(|t| ProductTerm { weight: t.weight, a: t.a.transpose(), b: t.b.transpose() })
            .collect();
        let cert = SepVerdict {
            verdict: Verdict::Separable,
            certificate: Certificate::ProductDecomposition { terms: transposed, residual: 0.0, eps: 1e-10, iterations: 0 },
        };
        prop_assert!(cert.verify(&h.transposed()).unwrap().ok);
    }

    #[test]
    fn local_cp_maps_keep_separable_states_passing(seed: u64, n in 2usize..4, m in 2usize..4, k in 2usize..4) {
        let (h, _) = product_state(n, m, 3, seed);
        let beta = generators::random_cp(seed ^ 13, n, k, 2);
        let moved = beta.ampliate_left(h.density()).unwrap();
        let h2 = Functional::bipartite(moved.without_dims(), k, m).unwrap();
        let family = WitnessFamily::sampled(m, seed, 8, 0);
        prop_assert!(witness_sweep(&h2, &family, 1e-9).unwrap().passed());
    }

    #[test]
    fn tower_expectations_compose_to_the_coarser_level(big_k in 1usize..5, k in 0usize..5, j in 0usize..5) {
        prop_assume!(k <= big_k && j <= big_k);
        let ek = conditional_expectation_level(big_k, k).unwrap();
        let ej = conditional_expectation_level(big_k, j).unwrap();
        let emin = conditional_expectation_level(big_k, k.min(j)).unwrap();
        prop_assert!(superop_dist(&ek.compose(&ej).unwrap(), &emin) < 1e-12);
    }

    #[test]
    fn lifted_witnesses_stay_positive(seed: u64, big_k in 1usize..4, k in 1usize..4) {
        prop_assume!(k <= big_k);
        let d = 1usize << k;
        let psi = generators::random_decomposable(seed, d, d, 2);
        let lifted = lift_map(&psi, big_k, k).unwrap();
        let x = psd(1 << big_k, 2, &mut rng_from_seed(seed ^ 17));
        prop_assert!(min_eigenvalue(&lifted.apply(&x).unwrap()).unwrap() > -1e-9);
    }

    #[test]
    fn truncation_transports_product_certificates(seed: u64, big_k in 1usize..4, k in 0usize..4) {
        prop_assume!(k <= big_k);
        let (h, terms) = product_state(2, 1 << big_k, 2, seed);
        let cert = SepVerdict {
            verdict: Verdict::Separable,
            certificate: Certificate::ProductDecomposition { terms, residual: 0.0, eps: 1e-10, iterations: 0 },
        };
        prop_assert!(cert.verify(&h).unwrap().ok);
        let moved = transport_certificate(&cert, big_k, k).unwrap().expect("separable certificates transport");
        prop_assert_eq!(moved.verdict, Verdict::Separable);
        let tail = 1usize << (big_k - k);
        let truncated = truncate_density(h.density(), 2, 1 << k, tail);
        prop_assert!(moved.verify(&Functional::bipartite(truncated, 2, 1 << k).unwrap()).unwrap().ok);
    }
}

/// `Tr_tail` on `M_2 ⊗ M_head ⊗ M_tail`, as an independent reference.
fn truncate_density(x: &ComplexMatrix, a: usize, head: usize, tail: usize) -> ComplexMatrix {
    let n = a * head;
    ComplexMatrix::from_fn(n, n, |r, c| {
        (0..tail).map(|t| x.get(r * tail + t, c * tail + t)).sum()
    })
}
