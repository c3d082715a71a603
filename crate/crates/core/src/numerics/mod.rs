//! Special functions, seeded randomness, quadrature and dense linear
//! algebra. Everything is `f64`.

pub mod linalg;
pub mod matrix;
pub mod quad;
pub mod rng;
pub mod special;

pub use linalg::{cholesky, cholesky_solve, qr_orthonormal};
pub use matrix::{dot, norm, sample_gaussian_matrix, DenseMatrix};
pub use quad::{integrate, integrate_with};
pub use rng::Rng;
pub use special::{bessel_j, bessel_lambda, gamma_fn, ln_gamma};

/// Haar-distributed d×d orthogonal matrix.
pub fn haar_orthogonal(rng: &mut Rng, d: usize) -> crate::Result<DenseMatrix> {
    qr_orthonormal(&sample_gaussian_matrix(rng, d, d))
}

/// Mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
