//! Random Maclaurin and Tensor Sketch features for dot-product kernels
//! `α (q + ⟨x, y⟩)^m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{polynomial_dot_form, Kernel, KernelSpec};
use crate::numerics::{dot, DenseMatrix, Rng};

/// Base of the degree distribution P(N = n) ∝ p^{−(n+1)}.
pub const DEGREE_BASE: f64 = 2.0;
/// Largest sampled degree.
pub const MAX_DEGREE: usize = 30;

fn dot_form(spec: &KernelSpec) -> Result<(f64, f64, u32)> {
    match spec.kernel {
        Kernel::PolynomialSphere { a, m, .. } => {
            let (alpha, q) = polynomial_dot_form(a, m);
            Ok((alpha, q, m))
        }
        _ => Err(Error::Incompatible(format!("{} is not a dot-product kernel", spec.label()))),
    }
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |b, i| b * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients a_n of α (q + t)^m = Σ a_n t^n, padded to `MAX_DEGREE + 1`.
pub fn maclaurin_coefficients(alpha: f64, q: f64, m: u32) -> Result<Vec<f64>> {
    let mut a = vec![0.0; MAX_DEGREE + 1];
    for n in 0..=m.min(MAX_DEGREE as u32) {
        a[n as usize] = alpha * binom(m, n) * q.powi((m - n) as i32);
    }
    if let Some(n) = a.iter().position(|&c| c < 0.0) {
        return Err(Error::NegativeCoefficient(n));
    }
    Ok(a)
}

/// P(N = n) for n = 0..=MAX_DEGREE after renormalizing the truncation.
pub fn degree_probabilities() -> Vec<f64> {
    let raw: Vec<f64> = (0..=MAX_DEGREE).map(|n| DEGREE_BASE.powi(-(n as i32 + 1))).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / z).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaclaurinModel {
    pub dim: usize,
    pub coefficients: Vec<f64>,
    pub degrees: Vec<usize>,
    /// Per feature, `degrees[j]` Rademacher vectors of length `dim`.
    pub projections: Vec<Vec<i8>>,
    /// √(a_N / (s P(N))) per feature.
    pub scales: Vec<f64>,
}

pub fn build_maclaurin(spec: &KernelSpec, s: usize, rng: &mut Rng) -> Result<MaclaurinModel> {
    if s == 0 {
        return Err(Error::Domain("feature count must be positive".into()));
    }
    let (alpha, q, m) = dot_form(spec)?;
    let coefficients = maclaurin_coefficients(alpha, q, m)?;
    let probs = degree_probabilities();
    let d = spec.dim;
    let mut degrees = Vec::with_capacity(s);
    let mut projections = Vec::with_capacity(s);
    let mut scales = Vec::with_capacity(s);
    for _ in 0..s {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut n = MAX_DEGREE;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                n = k;
                break;
            }
        }
        let signs: Vec<i8> = (0..n * d).map(|_| rng.rademacher() as i8).collect();
        degrees.push(n);
        projections.push(signs);
        scales.push((coefficients[n] / (s as f64 * probs[n])).sqrt());
    }
    Ok(MaclaurinModel { dim: d, coefficients, degrees, projections, scales })
}

impl MaclaurinModel {
    pub fn width(&self) -> usize {
        self.degrees.len()
    }

    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (j, o) in out.iter_mut().enumerate() {
            if self.scales[j] == 0.0 {
                *o = 0.0;
                continue;
            }
            let prod: f64 = self.projections[j]
                .chunks(d)
                .map(|w| w.iter().zip(x).map(|(&s, v)| s as f64 * v).sum::<f64>())
                .product();
            *o = self.scales[j] * prod;
        }
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        check(self.dim, x)?;
        let mut out = vec![0.0; self.width()];
        self.features_into(x, &mut out);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchLevel {
    /// Bucket of each augmented coordinate (length d + 1).
    pub hash: Vec<usize>,
    pub sign: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchModel {
    pub dim: usize,
    pub s: usize,
    pub alpha: f64,
    pub q: f64,
    pub levels: Vec<SketchLevel>,
}

pub fn build_tensor_sketch(spec: &KernelSpec, s: usize, rng: &mut Rng) -> Result<SketchModel> {
    if s == 0 {
        return Err(Error::Domain("sketch length must be positive".into()));
    }
    let (alpha, q, m) = dot_form(spec)?;
    if q < 0.0 {
        return Err(Error::NegativeCoefficient(0));
    }
    let d = spec.dim;
    let levels = (0..m)
        .map(|_| SketchLevel {
            hash: (0..=d).map(|_| rng.below(s)).collect(),
            sign: (0..=d).map(|_| rng.rademacher() as i8).collect(),
        })
        .collect();
    Ok(SketchModel { dim: d, s, alpha, q, levels })
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    fn mul(self, o: C64) -> C64 {
        C64 { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

/// DFT with sign −1 (forward) or +1 (inverse, unscaled).
fn dft(x: &[C64], sign: f64) -> Vec<C64> {
    let n = x.len();
    if n.is_power_of_two() {
        return fft_radix2(x, sign);
    }
    (0..n)
        .map(|k| {
            let mut acc = C64 { re: 0.0, im: 0.0 };
            for (j, v) in x.iter().enumerate() {
                let t = sign * 2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                acc.re += v.re * t.cos() - v.im * t.sin();
                acc.im += v.re * t.sin() + v.im * t.cos();
            }
            acc
        })
        .collect()
}

fn fft_radix2(x: &[C64], sign: f64) -> Vec<C64> {
    let n = x.len();
    let bits = n.trailing_zeros();
    let mut a: Vec<C64> = (0..n)
        .map(|i| x[if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) }])
        .collect();
    let mut len = 2;
    while len <= n {
        let t = sign * 2.0 * std::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = C64 { re: (t * k as f64).cos(), im: (t * k as f64).sin() };
                let u = a[start + k];
                let v = a[start + k + len / 2].mul(w);
                a[start + k] = C64 { re: u.re + v.re, im: u.im + v.im };
                a[start + k + len / 2] = C64 { re: u.re - v.re, im: u.im - v.im };
            }
        }
        len <<= 1;
    }
    a
}

impl SketchModel {
    pub fn width(&self) -> usize {
        self.s
    }

    fn count_sketch(&self, level: &SketchLevel, x: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.s];
        let q = self.q.sqrt();
        for (i, (&h, &g)) in level.hash.iter().zip(&level.sign).enumerate() {
            let v = if i < self.dim { x[i] } else { q };
            c[h] += g as f64 * v;
        }
        c
    }

    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        let scale = self.alpha.sqrt();
        if self.levels.is_empty() {
            // m = 0: constant kernel α
            out.iter_mut().for_each(|o| *o = 0.0);
            out[0] = scale;
            return;
        }
        if self.levels.len() == 1 {
            let c = self.count_sketch(&self.levels[0], x);
            for (o, v) in out.iter_mut().zip(c) {
                *o = scale * v;
            }
            return;
        }
        let mut prod: Option<Vec<C64>> = None;
        for level in &self.levels {
            let c: Vec<C64> = self.count_sketch(level, x).into_iter().map(|re| C64 { re, im: 0.0 }).collect();
            let f = dft(&c, -1.0);
            prod = Some(match prod {
                None => f,
                Some(p) => p.iter().zip(&f).map(|(a, b)| a.mul(*b)).collect(),
            });
        }
        let back = dft(&prod.expect("at least one level"), 1.0);
        let n = self.s as f64;
        for (o, v) in out.iter_mut().zip(back) {
            *o = scale * v.re / n;
        }
    }

    /// Sketch of one input; ⟨sketch(x), sketch(y)⟩ estimates the kernel.
    pub fn sketch(&self, x: &[f64]) -> Result<Vec<f64>> {
        check(self.dim, x)?;
        let mut out = vec![0.0; self.s];
        self.features_into(x, &mut out);
        Ok(out)
    }
}

fn check(dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
    }
    Ok(())
}

/// Any baseline model, for uniform handling in experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "baseline", rename_all = "lowercase")]
pub enum Baseline {
    Maclaurin(MaclaurinModel),
    Sketch(SketchModel),
}

impl Baseline {
    pub fn width(&self) -> usize {
        match self {
            Baseline::Maclaurin(m) => m.width(),
            Baseline::Sketch(m) => m.width(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Baseline::Maclaurin(m) => m.dim,
            Baseline::Sketch(m) => m.dim,
        }
    }

    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Baseline::Maclaurin(m) => m.features_into(x, out),
            Baseline::Sketch(m) => m.features_into(x, out),
        }
    }

    pub fn approx_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check(self.dim(), x)?;
        check(self.dim(), y)?;
        let mut a = vec![0.0; self.width()];
        let mut b = vec![0.0; self.width()];
        self.features_into(x, &mut a);
        self.features_into(y, &mut b);
        Ok(dot(&a, &b))
    }

    /// Row-major feature matrix of the rows of `x`.
    pub fn feature_rows(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.cols() });
        }
        let w = self.width();
        let mut out = vec![0.0; w * x.rows()];
        out.par_chunks_mut(w).enumerate().for_each(|(i, row)| self.features_into(&x.row(i), row));
        Ok(out)
    }

    pub fn approx_gram(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let rows = self.feature_rows(x)?;
        let w = self.width();
        Ok(crate::features::signed_gram(&rows, x.rows(), w, w))
    }
}
