//! Linear learners on row-major feature matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, cholesky_solve, dot, DenseMatrix};

/// Row-major n×p features.
#[derive(Clone, Copy, Debug)]
pub struct Features<'a> {
    pub data: &'a [f64],
    pub n: usize,
    pub p: usize,
}

impl<'a> Features<'a> {
    pub fn new(data: &'a [f64], n: usize, p: usize) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::DimensionMismatch { expected: n * p, got: data.len() });
        }
        Ok(Features { data, n, p })
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub w: Vec<f64>,
    /// Crude estimate (ratio of extreme Cholesky pivots, squared).
    pub condition_estimate: f64,
}

impl RidgeModel {
    pub fn ill_conditioned(&self) -> bool {
        self.condition_estimate > 1e12
    }
}

/// Add `sign · x xᵀ` to the lower triangle of `m`.
fn rank_one_lower(m: &mut DenseMatrix, x: &[f64], sign: f64) {
    for (j, &xj) in x.iter().enumerate() {
        let v = sign * xj;
        if v != 0.0 {
            for (mi, xi) in m.col_mut(j)[j..].iter_mut().zip(&x[j..]) {
                *mi += v * xi;
            }
        }
    }
}

/// Lower triangle of Σ_{i ∈ rows} xᵢ xᵢᵀ.
fn lower_gram(f: Features, rows: impl Iterator<Item = usize>) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(f.p, f.p);
    for i in rows {
        rank_one_lower(&mut m, f.row(i), 1.0);
    }
    m
}

/// y = A x for symmetric A stored in its lower triangle.
fn sym_matvec(a: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let col = &a.col(j)[j..];
        out[j] += col[0] * x[j];
        for (k, v) in col.iter().enumerate().skip(1) {
            out[j + k] += v * x[j];
            out[j] += v * x[j + k];
        }
    }
    out
}

fn add_diagonal(m: &DenseMatrix, scale: f64, shift: f64) -> DenseMatrix {
    let mut h = m.clone();
    h.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    for j in 0..h.rows() {
        h[(j, j)] += shift;
    }
    h
}

/// w = (FᵀF + λI)⁻¹ Fᵀy.
pub fn train_ridge(f: Features, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("ridge penalty must be positive, got {lambda}")));
    }
    if y.len() != f.n {
        return Err(Error::DimensionMismatch { expected: f.n, got: y.len() });
    }
    let a = add_diagonal(&lower_gram(f, 0..f.n), 1.0, lambda);
    let mut b = vec![0.0; f.p];
    for i in 0..f.n {
        for (bk, rk) in b.iter_mut().zip(f.row(i)) {
            *bk += y[i] * rk;
        }
    }
    let l = cholesky(&a).ok_or(Error::Indefinite(lambda))?;
    let mut w = cholesky_solve(&l, &b);
    // one step of refinement keeps the normal-equation residual tiny
    let r: Vec<f64> = sym_matvec(&a, &w).iter().zip(&b).map(|(aw, bi)| bi - aw).collect();
    let dw = cholesky_solve(&l, &r);
    w.iter_mut().zip(dw).for_each(|(wi, d)| *wi += d);
    let diag: Vec<f64> = (0..l.rows()).map(|i| l[(i, i)].abs()).collect();
    let hi = diag.iter().cloned().fold(0.0, f64::max);
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RidgeModel { w, condition_estimate: (hi / lo).powi(2) })
}

pub fn predict_ridge(model: &RidgeModel, f: Features) -> Vec<f64> {
    (0..f.n).map(|i| dot(&model.w, f.row(i))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// Relative duality gap at which a binary problem stops.
    pub tol: f64,
    /// Newton iterations per binary problem.
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1000.0, tol: 1e-4, max_iter: 100 }
    }
}

/// One-vs-rest squared-hinge linear SVM without bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<f64>,
    /// One weight vector per class; a single vector for two classes.
    pub weights: Vec<Vec<f64>>,
}

/// Primal and dual objective of ½‖w‖² + C Σ max(0, 1 − yᵢ oᵢ)² at w, with
/// the dual point αᵢ = 2C max(0, 1 − yᵢ oᵢ).
fn svm_gap(f: Features, y: &[f64], w: &[f64], out: &[f64], c: f64) -> (f64, f64) {
    let mut loss = 0.0;
    let mut v = vec![0.0; f.p];
    let mut sum_a = 0.0;
    let mut sum_a2 = 0.0;
    for i in 0..f.n {
        let xi = (1.0 - y[i] * out[i]).max(0.0);
        if xi > 0.0 {
            loss += xi * xi;
            let a = 2.0 * c * xi;
            sum_a += a;
            sum_a2 += a * a;
            v.iter_mut().zip(f.row(i)).for_each(|(vk, xk)| *vk += a * y[i] * xk);
        }
    }
    let primal = 0.5 * dot(w, w) + c * loss;
    let dual = sum_a - 0.5 * dot(&v, &v) - sum_a2 / (4.0 * c);
    (primal, dual)
}

/// Minimizer over t ≥ 0 of the piecewise quadratic f(w + t d).
fn line_search(y: &[f64], out: &[f64], delta: &[f64], wd: f64, dd: f64, c: f64) -> f64 {
    let slope = |t: f64| {
        let mut g = wd + t * dd;
        for i in 0..y.len() {
            let xi = 1.0 - y[i] * (out[i] + t * delta[i]);
            if xi > 0.0 {
                g -= 2.0 * c * y[i] * delta[i] * xi;
            }
        }
        g
    };
    let mut hi = 1.0;
    while slope(hi) < 0.0 && hi < 1e6 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    // the slope is piecewise linear and increasing; a few secant-guarded
    // bisection steps pin the root
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Finite Newton method for the primal squared-hinge problem. `gram` holds
/// the lower triangle of Σ xᵢxᵢᵀ over all rows, the Hessian block at w = 0.
fn binary_newton(f: Features, y: &[f64], gram: &DenseMatrix, params: &SvmParams) -> Result<Vec<f64>> {
    let c = params.c;
    let mut w = vec![0.0; f.p];
    let mut out = vec![0.0; f.n];
    let mut active = vec![true; f.n];
    let mut m = gram.clone();
    for _ in 0..params.max_iter {
        let mut rhs = vec![0.0; f.p];
        for i in (0..f.n).filter(|&i| active[i]) {
            rhs.iter_mut().zip(f.row(i)).for_each(|(r, x)| *r += 2.0 * c * y[i] * x);
        }
        let h = add_diagonal(&m, 2.0 * c, 1.0);
        let l = cholesky(&h).ok_or(Error::Indefinite(c))?;
        let target = cholesky_solve(&l, &rhs);
        let d: Vec<f64> = target.iter().zip(&w).map(|(t, wk)| t - wk).collect();
        let delta: Vec<f64> = (0..f.n).map(|i| dot(f.row(i), &d)).collect();
        let t = line_search(y, &out, &delta, dot(&w, &d), dot(&d, &d), c);
        w.iter_mut().zip(&d).for_each(|(wk, dk)| *wk += t * dk);
        out.iter_mut().zip(&delta).for_each(|(o, dl)| *o += t * dl);

        let (primal, dual) = svm_gap(f, y, &w, &out, c);
        if primal - dual <= params.tol * primal.abs().max(1e-12) {
            return Ok(w);
        }
        let next: Vec<bool> = (0..f.n).map(|i| y[i] * out[i] < 1.0).collect();
        let changed = (0..f.n).filter(|&i| next[i] != active[i]).count();
        if changed > f.n / 2 {
            m = lower_gram(f, (0..f.n).filter(|&i| next[i]));
        } else {
            for i in (0..f.n).filter(|&i| next[i] != active[i]) {
                rank_one_lower(&mut m, f.row(i), if next[i] { 1.0 } else { -1.0 });
            }
        }
        active = next;
    }
    Err(Error::SolverBudget(params.max_iter))
}

pub fn train_linear_svm(f: Features, labels: &[f64], params: &SvmParams) -> Result<SvmModel> {
    if !(params.c > 0.0) {
        return Err(Error::Domain(format!("C must be positive, got {}", params.c)));
    }
    if labels.len() != f.n {
        return Err(Error::DimensionMismatch { expected: f.n, got: labels.len() });
    }
    let mut classes = labels.to_vec();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Data("classification needs at least two distinct labels".into()));
    }
    let gram = lower_gram(f, 0..f.n);
    let targets: Vec<f64> = if classes.len() == 2 { vec![classes[1]] } else { classes.clone() };
    let weights = targets
        .par_iter()
        .map(|&c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            binary_newton(f, &y, &gram, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel { classes, weights })
}

pub fn predict_svm(model: &SvmModel, f: Features) -> Vec<f64> {
    (0..f.n)
        .map(|i| {
            let x = f.row(i);
            if model.weights.len() == 1 {
                return if dot(&model.weights[0], x) > 0.0 { model.classes[1] } else { model.classes[0] };
            }
            let (best, _) = model
                .weights
                .iter()
                .enumerate()
                .map(|(k, w)| (k, dot(w, x)))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            model.classes[best]
        })
        .collect()
}

pub fn accuracy(model: &SvmModel, f: Features, y: &[f64]) -> f64 {
    let pred = predict_svm(model, f);
    pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64
}

pub fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    (pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}
