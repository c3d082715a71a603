use super::matrix::{dot, DenseMatrix};
use crate::error::{Error, Result};

/// Orthonormal factor of a square matrix by Householder QR, with the sign
/// of each column chosen so that R has a nonnegative diagonal. With this
/// convention Q is unique for full-rank input, which keeps seeded
/// experiments reproducible and makes Q Haar distributed for Gaussian input.
pub fn qr_orthonormal(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.cols() });
    }
    let mut a = m.clone();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut rdiag = vec![0.0; n];
    for k in 0..n {
        let col = &a.col(k)[k..];
        let alpha = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(alpha > 1e-300) {
            return Err(Error::RankDeficient { column: k });
        }
        let x0 = col[0];
        let beta = if x0 >= 0.0 { -alpha } else { alpha };
        let mut v = col.to_vec();
        v[0] -= beta;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn > 0.0 {
            for x in v.iter_mut() {
                *x /= vn;
            }
        }
        for j in k..n {
            let cj = &mut a.col_mut(j)[k..];
            let p = 2.0 * dot(&v, cj);
            for (c, vi) in cj.iter_mut().zip(&v) {
                *c -= p * vi;
            }
        }
        rdiag[k] = a[(k, k)];
        // relative rank test: a pivot far below the column scale is zero
        if rdiag[k].abs() <= 1e-13 * m.col(k).iter().map(|x| x * x).sum::<f64>().sqrt() {
            return Err(Error::RankDeficient { column: k });
        }
        vs.push(v);
    }
    // Q = H_0 H_1 ... H_{n-1} applied to the identity, built backwards
    let mut q = DenseMatrix::identity(n);
    for k in (0..n).rev() {
        let v = &vs[k];
        for j in 0..n {
            let cj = &mut q.col_mut(j)[k..];
            let p = 2.0 * dot(v, cj);
            for (c, vi) in cj.iter_mut().zip(v) {
                *c -= p * vi;
            }
        }
    }
    for (k, &r) in rdiag.iter().enumerate() {
        if r < 0.0 {
            for x in q.col_mut(k) {
                *x = -*x;
            }
        }
    }
    Ok(q)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite
/// matrix, or `None` if a pivot is not positive. Only the lower triangle of
/// `a` is read.
pub fn cholesky(a: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut v = a.col(j)[j..].to_vec();
        for k in 0..j {
            let ljk = l[(j, k)];
            if ljk != 0.0 {
                for (vi, ci) in v.iter_mut().zip(&l.col(k)[j..]) {
                    *vi -= ljk * ci;
                }
            }
        }
        if !(v[0] > 0.0) {
            return None;
        }
        let d = v[0].sqrt();
        for (o, vi) in l.col_mut(j)[j..].iter_mut().zip(&v) {
            *o = vi / d;
        }
    }
    Some(l)
}

/// Solve L Lᵀ x = b given the Cholesky factor.
pub fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for k in 0..n {
        y[k] /= l[(k, k)];
        let yk = y[k];
        for (yi, li) in y[k + 1..].iter_mut().zip(&l.col(k)[k + 1..]) {
            *yi -= yk * li;
        }
    }
    for i in (0..n).rev() {
        let s: f64 = l.col(i)[i + 1..].iter().zip(&y[i + 1..]).map(|(a, b)| a * b).sum();
        y[i] = (y[i] - s) / l[(i, i)];
    }
    y
}
