//! Seeded random matrices. Every generator draws from a `ChaCha20Rng`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::matrix::{ComplexMatrix, C64};

/// Name of the generator recorded in reports.
pub const RNG_NAME: &str = "ChaCha20";

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Standard complex Gaussian, `E|z|^2 = 1`.
pub fn complex_gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn unit_vector(n: usize, rng: &mut impl Rng) -> DVector<C64> {
    let v = DVector::from_fn(n, |_, _| complex_gaussian(rng));
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

/// Random self-adjoint matrix (GUE-like).
pub fn hermitian(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ginibre(n, n, rng).hermitian_part()
}

/// Wishart-type PSD matrix `G G^*` with `G` of shape `n x rank`.
pub fn psd(n: usize, rank: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ginibre(n, rank.max(1), rng);
    &g * &g.adjoint()
}

/// Unit-trace density with the given rank (Hilbert-Schmidt measure when `rank = n`).
pub fn density(n: usize, rank: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let w = psd(n, rank, rng);
    let t = w.trace().re;
    w.scale_re(1.0 / t)
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `R` removed.
pub fn unitary(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g: DMatrix<C64> = ginibre(n, n, rng).into_inner();
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    ComplexMatrix::from_dmatrix(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_is_a_state() {
        let mut rng = rng_from_seed(3);
        let d = density(4, 2, &mut rng);
        assert!((d.trace().re - 1.0).abs() < 1e-12);
        assert!(crate::matrix::is_psd(&d, 1e-12).unwrap());
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = rng_from_seed(9);
        let u = unitary(5, &mut rng);
        assert!((&u * &u.adjoint()).approx_eq(&ComplexMatrix::identity(5), 1e-12));
    }

    #[test]
    fn seeded_draws_repeat() {
        let a = ginibre(3, 3, &mut rng_from_seed(42));
        let b = ginibre(3, 3, &mut rng_from_seed(42));
        assert_eq!(a, b);
    }
}
