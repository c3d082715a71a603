//! Closed-form stationary kernels and their radial spectra.
//!
//! * `Gaussian(σ)`: `k(z) = exp(−‖z‖²/(2σ²))`.
//! * `DeltaGaussian(a, σ)`: `k(z) = Σ aᵢ exp(−‖z‖²/(2σᵢ²))`, indefinite as
//!   soon as one coefficient is negative.
//! * `PolynomialSphere(a, m)`: `k(z) = (1 − ‖z‖²/a²)^m` for inputs on the
//!   unit sphere, equal to `α (q + ⟨x, y⟩)^m` with `q = a²/2 − 1` and
//!   `α = (2/a²)^m`.
//!
//! The polynomial kernel only matters for ‖z‖ ≤ 2, so any stationary
//! extension beyond that radius represents it equally well. Cutting it off
//! exactly at 2 gives a Bessel-series spectrum whose mass is infinite. The
//! default extension instead smooths the kernel with a Gaussian of width ε
//! after pre-compensating the polynomial with the inverse heat flow
//! `g = exp(−(ε²/2)Δ) k` and truncating `g` at `ρ = √(4 + ε²d) + 4ε`, so
//! that the smoothing barely reaches back inside the ball of radius 2. On
//! that ball the extension matches the polynomial to about 1e-5. Its
//! spectrum is
//!
//! `p(w) = (2π)^{−d/2} ρ^d e^{−ε²w²/2} Σ_i βᵢ 2^i i! Λ_{d/2+i}(ρw)`
//!
//! with `Λ_ν(u) = J_ν(u)/u^ν` and βᵢ the coefficients of g in
//! `t = 1 − r²/ρ²`. Setting ε = 0 gives back the hard cutoff at ρ = 2.
//! Left unset, ε is picked from a small grid to minimize the total mass.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::special::{bessel_lambda, ln_gamma_pos};
use crate::numerics::{dot, DenseMatrix};
use crate::spectrum::{Profile, RadialSignedSpectrum, ScanHint};

/// Candidate smoothing widths tried when none is given.
pub const SMOOTHING_GRID: [f64; 9] = [0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6, 0.8, 1.0];

/// Kernel family and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Kernel {
    Gaussian {
        sigma: f64,
    },
    PolynomialSphere {
        a: f64,
        m: u32,
        /// Width ε of the spectral smoothing; 0 selects the hard cutoff and
        /// `None` picks the width with the smallest total mass.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smoothing: Option<f64>,
    },
    DeltaGaussian {
        coefficients: Vec<f64>,
        bandwidths: Vec<f64>,
    },
}

/// A kernel together with the input dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kernel: Kernel,
    pub dim: usize,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64, dim: usize) -> Self {
        KernelSpec { kernel: Kernel::Gaussian { sigma }, dim }
    }
    pub fn polynomial(a: f64, m: u32, dim: usize) -> Self {
        KernelSpec {
            kernel: Kernel::PolynomialSphere { a, m, smoothing: None },
            dim,
        }
    }
    pub fn delta_gaussian(coefficients: Vec<f64>, bandwidths: Vec<f64>, dim: usize) -> Self {
        KernelSpec {
            kernel: Kernel::DeltaGaussian { coefficients, bandwidths },
            dim,
        }
    }
    /// The same kernel in another dimension.
    pub fn with_dim(&self, dim: usize) -> Self {
        KernelSpec { kernel: self.kernel.clone(), dim }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Spec("dim must be positive".into()));
        }
        match &self.kernel {
            Kernel::Gaussian { sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Spec(format!("sigma must be positive, got {sigma}")));
                }
            }
            Kernel::PolynomialSphere { a, m, smoothing } => {
                if !(*a > 2.0 && a.is_finite()) {
                    return Err(Error::Spec(format!("polynomial needs a > 2, got {a}")));
                }
                if *m == 0 {
                    return Err(Error::Spec("polynomial degree m must be positive".into()));
                }
                if let Some(e) = smoothing {
                    if !(*e >= 0.0 && e.is_finite()) {
                        return Err(Error::Spec(format!("smoothing must be >= 0, got {e}")));
                    }
                }
            }
            Kernel::DeltaGaussian { coefficients, bandwidths } => {
                if coefficients.is_empty() || coefficients.len() != bandwidths.len() {
                    return Err(Error::Spec("need matching, nonempty coefficient and bandwidth lists".into()));
                }
                if coefficients.iter().any(|a| *a == 0.0 || !a.is_finite()) {
                    return Err(Error::Spec("coefficients must be nonzero".into()));
                }
                if bandwidths.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::Spec("bandwidths must be positive".into()));
                }
                for i in 0..bandwidths.len() {
                    for j in i + 1..bandwidths.len() {
                        if bandwidths[i] == bandwidths[j] {
                            return Err(Error::Spec("bandwidths must be distinct".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn requires_sphere(&self) -> bool {
        matches!(self.kernel, Kernel::PolynomialSphere { .. })
    }

    /// k(0).
    pub fn k_zero(&self) -> f64 {
        match &self.kernel {
            Kernel::Gaussian { .. } | Kernel::PolynomialSphere { .. } => 1.0,
            Kernel::DeltaGaussian { coefficients, .. } => coefficients.iter().sum(),
        }
    }

    /// Parse either a TOML document or the inline form, e.g.
    /// `gaussian:sigma=1`, `poly:a=3,m=1`, `delta-gaussian:a=1/-1,sigma=1/10`.
    /// A `dim=` entry is optional inline; `default_dim` fills it otherwise.
    pub fn parse(text: &str, default_dim: Option<usize>) -> Result<Self> {
        let t = text.trim();
        if t.contains('\n') || t.contains("variant") {
            return Self::from_toml(t, default_dim);
        }
        let (name, rest) = t.split_once(':').unwrap_or((t, ""));
        let mut kv = std::collections::BTreeMap::new();
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("expected key=value, got '{item}'")))?;
            kv.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Spec(format!("not a number: '{s}'")))
        };
        let list = |s: &str| -> Result<Vec<f64>> { s.split(['/', ';']).map(|x| num(x.trim())).collect() };
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Spec(format!("missing parameter '{k}'")));
        let dim = match kv.get("dim") {
            Some(v) => v.parse::<usize>().map_err(|_| Error::Spec(format!("bad dim '{v}'")))?,
            None => default_dim.ok_or_else(|| Error::Spec("dimension not given".into()))?,
        };
        let kernel = match name.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Kernel::Gaussian { sigma: num(get("sigma")?)? },
            "poly" | "polynomial" | "polynomial-sphere" => Kernel::PolynomialSphere {
                a: num(get("a")?)?,
                m: get("m")?
                    .parse::<u32>()
                    .map_err(|_| Error::Spec("m must be a positive integer".into()))?,
                smoothing: match kv.get("eps").or_else(|| kv.get("smoothing")).map(|s| s.as_str()) {
                    Some("auto") | None => None,
                    Some(v) => Some(num(v)?),
                },
            },
            "delta-gaussian" | "delta_gaussian" | "dg" => Kernel::DeltaGaussian {
                coefficients: list(get("a")?)?,
                bandwidths: list(get("sigma")?)?,
            },
            other => return Err(Error::Spec(format!("unknown kernel '{other}'"))),
        };
        let spec = KernelSpec { kernel, dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml(text: &str, default_dim: Option<usize>) -> Result<Self> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        if !value.contains_key("dim") {
            let d = default_dim.ok_or_else(|| Error::Spec("dimension not given".into()))?;
            value.insert("dim".into(), toml::Value::Integer(d as i64));
        }
        let spec: KernelSpec = value.try_into().map_err(|e: toml::de::Error| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("kernel specs always serialize")
    }

    /// Short human-readable label, also a valid inline spec.
    pub fn label(&self) -> String {
        let j = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join("/");
        match &self.kernel {
            Kernel::Gaussian { sigma } => format!("gaussian:sigma={sigma},dim={}", self.dim),
            Kernel::PolynomialSphere { a, m, smoothing } => match smoothing {
                Some(e) => format!("poly:a={a},m={m},eps={e},dim={}", self.dim),
                None => format!("poly:a={a},m={m},dim={}", self.dim),
            },
            Kernel::DeltaGaussian { coefficients, bandwidths } => format!(
                "delta-gaussian:a={},sigma={},dim={}",
                j(coefficients),
                j(bandwidths),
                self.dim
            ),
        }
    }
}

/// (α, q) with (1 − ‖z‖²/a²)^m = α (q + ⟨x, y⟩)^m on the unit sphere.
pub fn polynomial_dot_form(a: f64, m: u32) -> (f64, f64) {
    ((2.0 / (a * a)).powi(m as i32), a * a / 2.0 - 1.0)
}

/// k as a function of ‖z‖.
pub fn kernel_profile_eval(spec: &KernelSpec, z_norm: f64) -> Result<f64> {
    if !(z_norm >= 0.0) {
        return Err(Error::Domain(format!("z_norm must be >= 0, got {z_norm}")));
    }
    let z2 = z_norm * z_norm;
    Ok(match &spec.kernel {
        Kernel::Gaussian { sigma } => (-z2 / (2.0 * sigma * sigma)).exp(),
        Kernel::PolynomialSphere { a, m, .. } => {
            if z_norm > 2.0 + 1e-12 {
                return Err(Error::Domain(format!(
                    "polynomial kernel on the sphere needs ‖z‖ <= 2, got {z_norm}"
                )));
            }
            (1.0 - z2 / (a * a)).powi(*m as i32)
        }
        Kernel::DeltaGaussian { coefficients, bandwidths } => coefficients
            .iter()
            .zip(bandwidths)
            .map(|(c, s)| c * (-z2 / (2.0 * s * s)).exp())
            .sum(),
    })
}

/// k(x, y). For the polynomial kernel both closed forms are evaluated and
/// must agree.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: x.len() });
    }
    if y.len() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: y.len() });
    }
    let z2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    match &spec.kernel {
        Kernel::PolynomialSphere { a, m, .. } => {
            for v in [x, y] {
                let n = dot(v, v).sqrt();
                if (n - 1.0).abs() > 1e-8 {
                    return Err(Error::OffSphere(n));
                }
            }
            let form1 = (1.0 - z2 / (a * a)).powi(*m as i32);
            let (alpha, q) = polynomial_dot_form(*a, *m);
            let form2 = alpha * (q + dot(x, y)).powi(*m as i32);
            debug_assert!((form1 - form2).abs() < 1e-10 * form1.abs().max(1.0), "{form1} vs {form2}");
            Ok(form1)
        }
        _ => kernel_profile_eval(spec, z2.sqrt()),
    }
}

/// Exact Gram matrix of the rows of `x` (n×d).
pub fn gram_matrix(spec: &KernelSpec, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: x.cols() });
    }
    let n = x.rows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i)).collect();
    let mut k = DenseMatrix::zeros(n, n);
    let k0 = spec.k_zero();
    let sphere = spec.requires_sphere();
    if sphere {
        for r in &rows {
            let nr = dot(r, r).sqrt();
            if (nr - 1.0).abs() > 1e-8 {
                return Err(Error::OffSphere(nr));
            }
        }
    }
    use rayon::prelude::*;
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|i| {
                    if i == j {
                        return k0;
                    }
                    let z2: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    let z = if sphere { z2.sqrt().min(2.0) } else { z2.sqrt() };
                    kernel_profile_eval(spec, z).expect("valid radius")
                })
                .collect()
        })
        .collect();
    for (j, c) in cols.into_iter().enumerate() {
        k.col_mut(j).copy_from_slice(&c);
    }
    Ok(k)
}

/// Coefficients of exp(−(ε²/2)Δ) applied to Σ κ_j r^{2j} in dimension d.
fn inverse_heat(kappa: &[f64], eps: f64, d: usize) -> Vec<f64> {
    let mut out = kappa.to_vec();
    let mut term = kappa.to_vec();
    let c = -0.5 * eps * eps;
    for n in 1..kappa.len() {
        // Δ r^{2j} = 2j(2j + d − 2) r^{2j−2}
        let mut next = vec![0.0; kappa.len()];
        for j in 1..term.len() {
            let jf = j as f64;
            next[j - 1] += term[j] * 2.0 * jf * (2.0 * jf + d as f64 - 2.0);
        }
        for v in next.iter_mut() {
            *v *= c / n as f64;
        }
        for (o, v) in out.iter_mut().zip(&next) {
            *o += v;
        }
        term = next;
    }
    out
}

fn binom(n: u32, k: u32) -> f64 {
    let mut b = 1.0;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b
}

/// Parameters of the polynomial spectrum: (ρ, ε, β).
pub fn polynomial_series(a: f64, m: u32, smoothing: f64, d: usize) -> (f64, f64, Vec<f64>) {
    let eps = smoothing;
    let rho = if eps > 0.0 { (4.0 + eps * eps * d as f64).sqrt() + 4.0 * eps } else { 2.0 };
    let kappa: Vec<f64> = (0..=m).map(|j| binom(m, j) * (-1.0 / (a * a)).powi(j as i32)).collect();
    let gamma = inverse_heat(&kappa, eps, d);
    let beta: Vec<f64> = (0..=m)
        .map(|i| {
            (i..=m)
                .map(|j| {
                    let sgn = if i % 2 == 0 { 1.0 } else { -1.0 };
                    gamma[j as usize] * rho.powi(2 * j as i32) * binom(j, i) * sgn
                })
                .sum()
        })
        .collect();
    (rho, eps, beta)
}

fn gaussian_profile_terms(d: usize, coeffs: Vec<f64>, sigmas: Vec<f64>) -> Profile {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let df = d as f64;
    let terms: Vec<(f64, f64, f64)> = coeffs
        .iter()
        .zip(&sigmas)
        .map(|(a, s)| (a.signum(), a.abs().ln() + df * s.ln() - df * half_log_2pi, 0.5 * s * s))
        .collect();
    Arc::new(move |r: f64| {
        let r2 = r * r;
        let logs: Vec<f64> = terms.iter().map(|(_, l, h)| l - h * r2).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return 0.0;
        }
        let s: f64 = terms.iter().zip(&logs).map(|((sg, _, _), l)| sg * (l - top).exp()).sum();
        s * top.exp()
    })
}

/// Radial profile and scan hints for a kernel, without building the
/// spectrum.
pub fn radial_profile(spec: &KernelSpec) -> Result<(Profile, ScanHint)> {
    spec.validate()?;
    let d = spec.dim;
    let df = d as f64;
    Ok(match &spec.kernel {
        Kernel::Gaussian { sigma } => (
            gaussian_profile_terms(d, vec![1.0], vec![*sigma]),
            ScanHint { extent: (df.sqrt() + 12.0) / sigma, max_step: 0.5 / sigma },
        ),
        Kernel::DeltaGaussian { coefficients, bandwidths } => {
            let smin = bandwidths.iter().cloned().fold(f64::INFINITY, f64::min);
            let smax = bandwidths.iter().cloned().fold(0.0, f64::max);
            (
                gaussian_profile_terms(d, coefficients.clone(), bandwidths.clone()),
                ScanHint {
                    extent: (df.sqrt() + 12.0) / smin,
                    max_step: (0.05 / smax).min((df.sqrt() + 12.0) / smin / 4000.0),
                },
            )
        }
        Kernel::PolynomialSphere { a, m, smoothing } => {
            let eps = match smoothing {
                Some(e) => *e,
                None => auto_smoothing(*a, *m, d)?,
            };
            polynomial_profile(*a, *m, eps, d)
        }
    })
}

fn polynomial_profile(a: f64, m: u32, eps: f64, d: usize) -> (Profile, ScanHint) {
    let df = d as f64;
    let (rho, eps, beta) = polynomial_series(a, m, eps, d);
    let half = df / 2.0;
    let ln_pre = -half * (2.0 * PI).ln() + df * rho.ln();
    let weights: Vec<f64> = beta
        .iter()
        .enumerate()
        .map(|(i, b)| b * (i as f64 * 2f64.ln() + ln_gamma_pos(i as f64 + 1.0)).exp())
        .collect();
    let profile: Profile = Arc::new(move |w: f64| {
        let damp = -0.5 * eps * eps * w * w;
        let s: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, c)| c * bessel_lambda(half + i as f64, rho * w))
            .sum();
        s * (ln_pre + damp).exp()
    });
    let extent = if eps > 0.0 { 12.0 / eps } else { 8.0 * (half + m as f64 + 4.0) / rho };
    (profile, ScanHint { extent, max_step: PI / (16.0 * rho) })
}

/// Smoothing width from [`SMOOTHING_GRID`] with the least total mass,
/// cached per (a, m, d).
pub fn auto_smoothing(a: f64, m: u32, d: usize) -> Result<f64> {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<(u64, u32, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (a.to_bits(), m, d);
    if let Some(e) = cache.lock().expect("cache lock").get(&key) {
        return Ok(*e);
    }
    let mut best: Option<(f64, f64)> = None;
    let mut last_err = None;
    for &eps in &SMOOTHING_GRID {
        let (profile, hint) = polynomial_profile(a, m, eps, d);
        match RadialSignedSpectrum::build(d, profile, 1.0, hint) {
            Ok(s) => {
                let (p, n) = s.raw_masses();
                if best.is_none_or(|(_, b)| p + n < b) {
                    best = Some((eps, p + n));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let eps = match best {
        Some((e, _)) => e,
        None => return Err(last_err.unwrap_or_else(|| Error::InfiniteMass("no smoothing width works".into()))),
    };
    cache.lock().expect("cache lock").insert(key, eps);
    Ok(eps)
}

/// Radial spectrum with masses and calibration.
pub fn spectral_profile(spec: &KernelSpec) -> Result<RadialSignedSpectrum> {
    let (profile, hint) = radial_profile(spec)?;
    RadialSignedSpectrum::build(spec.dim, profile, spec.k_zero(), hint)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_parsing() {
        let s = KernelSpec::parse("delta-gaussian:a=1/-1,sigma=1/10", Some(16)).unwrap();
        assert_eq!(s, KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], 16));
        let s = KernelSpec::parse("poly:a=3,m=1,dim=8", None).unwrap();
        assert_eq!(s, KernelSpec::polynomial(3.0, 1, 8));
        assert!(KernelSpec::parse("poly:a=1.5,m=1", Some(3)).is_err());
        assert!(KernelSpec::parse("laplace:sigma=1", Some(3)).is_err());
        assert!(KernelSpec::parse("delta-gaussian:a=1/-1,sigma=2/2", Some(3)).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = KernelSpec::delta_gaussian(vec![2.0, -1.0], vec![1.0, 10.0], 4);
        let t = s.to_toml();
        assert_eq!(KernelSpec::parse(&t, None).unwrap(), s);
        let p = KernelSpec::polynomial(3.0, 2, 5);
        assert_eq!(KernelSpec::from_toml(&p.to_toml(), None).unwrap(), p);
    }

    #[test]
    fn inverse_heat_m1() {
        // g = k + d ε²/a² for m = 1
        let (rho, _, beta) = polynomial_series(3.0, 1, 0.5, 4);
        assert!((rho - (4.0f64 + 0.25 * 4.0).sqrt() - 2.0).abs() < 1e-12);
        let g0 = 1.0 + 4.0 * 0.25 / 9.0;
        let g1 = -1.0 / 9.0;
        assert!((beta[0] - (g0 + g1 * rho * rho)).abs() < 1e-12);
        assert!((beta[1] + g1 * rho * rho).abs() < 1e-12);
    }

    #[test]
    fn printed_coefficients_at_zero_smoothing() {
        // β_i = C(m,i)(1−4/a²)^{m−i}(4/a²)^i when ρ = 2
        let (rho, _, beta) = polynomial_series(3.0, 2, 0.0, 6);
        assert_eq!(rho, 2.0);
        let u = 4.0 / 9.0;
        let want = [(1.0 - u) * (1.0 - u), 2.0 * (1.0 - u) * u, u * u];
        for i in 0..3 {
            assert!((beta[i] - want[i]).abs() < 1e-12, "{i}: {} {}", beta[i], want[i]);
        }
    }
}
