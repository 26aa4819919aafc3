//! Minimisation of `<u⊗v| G |u⊗v>` over unit product vectors by alternating
//! eigenvector updates. Shared by the block-positivity test and the
//! linear-minimisation oracle of the separable decomposition.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::matrix::{herm_eig_unchecked, C64, ZERO};
use crate::random::unit_vector;

#[derive(Clone, Debug)]
pub(crate) struct ProductMin {
    pub value: f64,
    pub u: DVector<C64>,
    pub v: DVector<C64>,
}

/// `(I ⊗ v^*) G (I ⊗ v)`, an `n x n` matrix.
fn compress_b(g: &DMatrix<C64>, n: usize, m: usize, v: &DVector<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(n, n, ZERO);
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            for k in 0..m {
                let vk = v[k].conj();
                if vk == ZERO {
                    continue;
                }
                let mut inner = ZERO;
                for l in 0..m {
                    inner += g[(i * m + k, j * m + l)] * v[l];
                }
                s += vk * inner;
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// `(u^* ⊗ I) G (u ⊗ I)`, an `m x m` matrix.
fn compress_a(g: &DMatrix<C64>, n: usize, m: usize, u: &DVector<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(m, m, ZERO);
    for i in 0..n {
        let ui = u[i].conj();
        if ui == ZERO {
            continue;
        }
        for j in 0..n {
            let c = ui * u[j];
            if c == ZERO {
                continue;
            }
            for k in 0..m {
                for l in 0..m {
                    out[(k, l)] += c * g[(i * m + k, j * m + l)];
                }
            }
        }
    }
    out
}

/// Lowest eigenpair of a small Hermitian matrix.
fn lowest(h: &DMatrix<C64>) -> (f64, DVector<C64>) {
    let n = h.nrows();
    if n == 1 {
        return (h[(0, 0)].re, DVector::from_element(1, C64::new(1.0, 0.0)));
    }
    if n == 2 {
        let a = h[(0, 0)].re;
        let d = h[(1, 1)].re;
        let b = (h[(0, 1)] + h[(1, 0)].conj()) * 0.5;
        let mean = 0.5 * (a + d);
        let half = 0.5 * (a - d);
        let rad = (half * half + b.norm_sqr()).sqrt();
        let lam = mean - rad;
        // eigenvector of [[a, b], [b*, d]] for lam
        let v = if (a - lam).abs() + b.norm() < 1e-300 {
            DVector::from_vec(vec![C64::new(1.0, 0.0), ZERO])
        } else if half >= 0.0 {
            // a - lam >= d - lam, use the second row: b* x + (d - lam) y = 0
            DVector::from_vec(vec![-b, C64::new(a - lam, 0.0)])
        } else {
            DVector::from_vec(vec![C64::new(d - lam, 0.0), -b.conj()])
        };
        let norm = v.norm();
        if norm < 1e-300 {
            return (lam, DVector::from_vec(vec![C64::new(1.0, 0.0), ZERO]));
        }
        return (lam, v / C64::new(norm, 0.0));
    }
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let e = nalgebra::SymmetricEigen::new(sym.clone());
    if e.eigenvalues.iter().any(|x| !x.is_finite()) {
        let e = herm_eig_unchecked(&sym);
        return (e.min(), e.vector(n - 1));
    }
    let k = (0..n)
        .min_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]))
        .unwrap();
    (e.eigenvalues[k], e.eigenvectors.column(k).into_owned())
}

fn expectation(g: &DMatrix<C64>, n: usize, m: usize, u: &DVector<C64>, v: &DVector<C64>) -> f64 {
    let gv = compress_b(g, n, m, v);
    (u.adjoint() * gv * u)[(0, 0)].re
}

/// Alternating minimisation from a given start in the second factor.
pub(crate) fn descend(g: &DMatrix<C64>, n: usize, m: usize, v0: DVector<C64>, sweeps: usize) -> ProductMin {
    let scale = g.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    let mut v = v0;
    let (mut value, mut u) = lowest(&compress_b(g, n, m, &v));
    for _ in 0..sweeps {
        let (_, nv) = lowest(&compress_a(g, n, m, &u));
        v = nv;
        let (val, nu) = lowest(&compress_b(g, n, m, &v));
        u = nu;
        let improved = value - val;
        value = val;
        if improved <= 1e-11 * scale {
            break;
        }
    }
    ProductMin { value, u, v }
}

/// Best of `restarts` random starts plus the supplied warm starts.
pub(crate) fn minimize(
    g: &DMatrix<C64>,
    n: usize,
    m: usize,
    restarts: usize,
    sweeps: usize,
    warm: &[DVector<C64>],
    rng: &mut impl Rng,
) -> ProductMin {
    let mut best: Option<ProductMin> = None;
    let starts = warm
        .iter()
        .cloned()
        .chain((0..restarts).map(|_| unit_vector(m, rng)))
        .collect::<Vec<_>>();
    for v0 in starts {
        let r = descend(g, n, m, v0, sweeps);
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
    }
    best.expect("at least one start")
}

#[allow(dead_code)]
pub(crate) fn product_expectation(g: &DMatrix<C64>, n: usize, m: usize, u: &DVector<C64>, v: &DVector<C64>) -> f64 {
    expectation(g, n, m, u, v)
}
