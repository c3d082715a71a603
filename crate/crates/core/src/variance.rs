//! Variance of the GRFF/GORF kernel estimators.
//!
//! For a lag z and feature count s the GRFF estimator
//! `K = (m₊/s) Σ aᵢ − (m₋/s) Σ bᵢ` with `aᵢ = cos(wᵢᵀz)`, `bᵢ = cos(υᵢᵀz)`
//! has the closed-form variance
//! `m₊²/s [(1 + k̃₊(2z))/2 − k̃₊(z)²] + m₋²/s [(1 + k̃₋(2z))/2 − k̃₋(z)²]`.
//!
//! Coupling the columns only adds pair covariances, so the orthogonal minus
//! i.i.d. difference is
//!
//! `gap = (1/s²) [m₊² Σ_{i≠j} C(aᵢ,aⱼ) + m₋² Σ_{i≠j} C(bᵢ,bⱼ) − 2 m₊ m₋ Σ_{i,j} C(aᵢ,bⱼ)]`
//!
//! where each sum only runs over pairs the sampler actually couples. For two
//! exactly orthogonal columns with norms R₁, R₂ the vectors w₁ ± w₂ have norm
//! √(R₁²+R₂²) and uniform direction, which gives
//! `C = E Ω(√(R₁²+R₂²)‖z‖) − k̃ₐ k̃_b`. Note the order: the orthogonal
//! covariance is negative when Ω decays, which is the variance reduction.
//! Truncated couplings are only approximately orthogonal, so their pair
//! covariance is estimated from the sampler itself.
//!
//! Monte-Carlo pieces use the control variate Ω(R₁‖z‖)Ω(R₂‖z‖), whose mean is
//! exactly k̃ₐ k̃_b, so every term vanishes identically at z = 0.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{approx_kernel, Coupling, FeatureBuilder, Method};
use crate::numerics::special::{bessel_lambda, ln_gamma_pos};
use crate::numerics::{norm, Rng};
use crate::spectrum::{NormDensity, NormSampler, Part, PreparedSpectrum};

/// Ω_d(u) = Γ(d/2) (2/u)^{d/2−1} J_{d/2−1}(u), the average of cos(r uᵀz)
/// over directions uniform on the sphere when u = r‖z‖.
pub fn radial_char_fn(d: usize, u: f64) -> f64 {
    if u == 0.0 {
        return 1.0;
    }
    if d == 1 {
        return u.cos();
    }
    let nu = d as f64 / 2.0 - 1.0;
    // Γ(ν+1) 2^ν Λ_ν(u)
    (ln_gamma_pos(nu + 1.0) + nu * 2f64.ln()).exp() * bessel_lambda(nu, u)
}

/// k̃(z) = E[cos(wᵀz)] for norms drawn from `part`.
pub fn tilde_k(part: &NormDensity, d: usize, z_norm: f64) -> Result<f64> {
    if z_norm == 0.0 {
        return Ok(1.0);
    }
    part.expect(|r| radial_char_fn(d, r * z_norm), 1e-10)
}

/// A Monte-Carlo value with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }

    fn scaled(self, c: f64) -> Self {
        Estimate { value: c * self.value, stderr: c.abs() * self.stderr }
    }

    fn plus(self, other: Estimate) -> Self {
        Estimate {
            value: self.value + other.value,
            stderr: self.stderr.hypot(other.stderr),
        }
    }
}

const MC_CHUNKS: u64 = 64;

/// Parallel mean of `f` over `trials` draws. Deterministic for a given
/// generator state regardless of the thread count.
fn mc_mean<F>(trials: usize, rng: &mut Rng, f: F) -> Estimate
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    let base = Rng::new(rng.next_seed());
    let chunks = (MC_CHUNKS as usize).min(trials.max(1));
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = base.split(c as u64);
            let count = trials / chunks + usize::from(c < trials % chunks);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let v = f(&mut r);
                s1 += v;
                s2 += v * v;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = trials as f64;
    let mean = s1 / n;
    let var = if trials > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Estimate { value: mean, stderr: (var / n).sqrt() }
}

fn sampler_of(prep: &PreparedSpectrum, part: Part) -> Result<&NormSampler> {
    prep.part(part)
        .map(|(_, s)| s)
        .ok_or(Error::ZeroMass(part.name()))
}

/// Covariance of cos(w₁ᵀz), cos(w₂ᵀz) for exactly orthogonal directions
/// with norms from `a` and `b`.
fn orthogonal_pair_cov(a: &NormSampler, b: &NormSampler, d: usize, z: f64, trials: usize, rng: &mut Rng) -> Estimate {
    if z == 0.0 {
        return Estimate::exact(0.0);
    }
    mc_mean(trials, rng, |r| {
        let r1 = a.sample(r);
        let r2 = b.sample(r);
        radial_char_fn(d, r1.hypot(r2) * z) - radial_char_fn(d, r1 * z) * radial_char_fn(d, r2 * z)
    })
}

/// First coordinate of two columns of the truncated construction: two
/// columns of a 2m×2m Haar matrix, cut to their first d rows and
/// renormalized. With z along the first axis only that coordinate matters.
fn truncated_pair(r: &mut Rng, d: usize, m2: usize) -> (f64, f64) {
    let g1: Vec<f64> = (0..m2).map(|_| r.normal()).collect();
    let mut g2: Vec<f64> = (0..m2).map(|_| r.normal()).collect();
    let n1 = norm(&g1);
    let q1: Vec<f64> = g1.iter().map(|x| x / n1).collect();
    let p = crate::numerics::dot(&q1, &g2);
    for (x, q) in g2.iter_mut().zip(&q1) {
        *x -= p * q;
    }
    let u1 = q1[0] / norm(&q1[..d]);
    let u2 = g2[0] / norm(&g2[..d]);
    (u1, u2)
}

fn truncated_pair_cov(
    a: &NormSampler,
    b: &NormSampler,
    d: usize,
    s: usize,
    z: f64,
    trials: usize,
    rng: &mut Rng,
) -> Estimate {
    if z == 0.0 {
        return Estimate::exact(0.0);
    }
    let m2 = 2 * s.max(d);
    mc_mean(trials, rng, |r| {
        let (u1, u2) = truncated_pair(r, d, m2);
        let r1 = a.sample(r);
        let r2 = b.sample(r);
        (r1 * z * u1).cos() * (r2 * z * u2).cos() - radial_char_fn(d, r1 * z) * radial_char_fn(d, r2 * z)
    })
}

/// Ordered coupled pair counts (pos-pos, neg-neg, pos-neg) for a coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairCounts {
    pub pos_pos: usize,
    pub neg_neg: usize,
    pub pos_neg: usize,
}

fn same_block_pairs(cols: impl Iterator<Item = usize> + Clone, d: usize, distinct: bool) -> usize {
    let v: Vec<usize> = cols.collect();
    let mut n = 0;
    for (i, &a) in v.iter().enumerate() {
        for (j, &b) in v.iter().enumerate() {
            if (!distinct || i != j) && a / d == b / d {
                n += 1;
            }
        }
    }
    n
}

pub fn pair_counts(coupling: Coupling, d: usize, s: usize, indefinite: bool) -> PairCounts {
    if !indefinite {
        return PairCounts { pos_pos: same_block_pairs(0..s, d, true), neg_neg: 0, pos_neg: 0 };
    }
    match coupling {
        Coupling::Stacked => {
            let pos_neg = (0..s)
                .map(|i| (s..2 * s).filter(|j| i / d == j / d).count())
                .sum();
            PairCounts {
                pos_pos: same_block_pairs(0..s, d, true),
                neg_neg: same_block_pairs(s..2 * s, d, true),
                pos_neg,
            }
        }
        Coupling::Block => {
            let p = same_block_pairs(0..s, d, true);
            PairCounts { pos_pos: p, neg_neg: p, pos_neg: 0 }
        }
        Coupling::Truncated => PairCounts { pos_pos: s * (s - 1), neg_neg: s * (s - 1), pos_neg: s * s },
    }
}

/// Closed-form variance of the i.i.d. estimator.
pub fn var_grff_closed(prep: &PreparedSpectrum, z_norm: f64, s: usize) -> Result<f64> {
    if s == 0 {
        return Err(Error::Domain("feature count must be positive".into()));
    }
    let d = prep.spectrum.dim();
    let (mp, mn) = prep.masses();
    let mut v = 0.0;
    for (part, mass) in [(Part::Positive, mp), (Part::Negative, mn)] {
        if let Some((density, _)) = prep.part(part) {
            let k1 = tilde_k(density, d, z_norm)?;
            let k2 = tilde_k(density, d, 2.0 * z_norm)?;
            v += mass * mass / s as f64 * ((1.0 + k2) / 2.0 - k1 * k1);
        }
    }
    Ok(v.max(0.0))
}

/// Variance change of one part when its s columns are taken from stacked
/// orthogonal blocks instead of i.i.d. For s ≤ d this is
/// `((s−1)/s) (E Ω(√(R₁²+R₂²)‖z‖) − k̃(z)²)`, with no mass factor.
pub fn g_k(sampler: &NormSampler, d: usize, s: usize, z_norm: f64, rng: &mut Rng, trials: usize) -> Estimate {
    let pairs = same_block_pairs(0..s, d, true);
    if pairs == 0 || z_norm == 0.0 {
        return Estimate::exact(0.0);
    }
    orthogonal_pair_cov(sampler, sampler, d, z_norm, trials, rng).scaled(pairs as f64 / (s * s) as f64)
}

/// Cross term −(2 m₊ m₋ / s²) Σ C(aᵢ, bⱼ) over coupled (w, υ) pairs.
pub fn h_term(
    prep: &PreparedSpectrum,
    coupling: Coupling,
    s: usize,
    z_norm: f64,
    rng: &mut Rng,
    trials: usize,
) -> Result<Estimate> {
    let pos = sampler_of(prep, Part::Positive)?;
    let neg = sampler_of(prep, Part::Negative)?;
    let d = prep.spectrum.dim();
    let (mp, mn) = prep.masses();
    let counts = pair_counts(coupling, d, s, true);
    if counts.pos_neg == 0 || z_norm == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let cov = match coupling {
        Coupling::Truncated => truncated_pair_cov(pos, neg, d, s, z_norm, trials, rng),
        _ => orthogonal_pair_cov(pos, neg, d, z_norm, trials, rng),
    };
    Ok(cov.scaled(-2.0 * mp * mn * counts.pos_neg as f64 / (s * s) as f64))
}

/// Var(GORF) − Var(GRFF) = m₊² G₊ + m₋² G₋ + H for the given coupling. For
/// positive definite kernels only the first term remains (ORF vs RFF).
pub fn variance_gap_with(
    prep: &PreparedSpectrum,
    coupling: Coupling,
    s: usize,
    z_norm: f64,
    rng: &mut Rng,
    trials: usize,
) -> Result<Estimate> {
    if s == 0 {
        return Err(Error::Domain("feature count must be positive".into()));
    }
    let d = prep.spectrum.dim();
    let (mp, mn) = prep.masses();
    let pos = sampler_of(prep, Part::Positive)?;
    let indefinite = prep.neg.is_some();
    let counts = pair_counts(coupling, d, s, indefinite);
    let s2 = (s * s) as f64;
    if z_norm == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let part_cov = |a: &NormSampler, b: &NormSampler, rng: &mut Rng| {
        if indefinite && coupling == Coupling::Truncated {
            truncated_pair_cov(a, b, d, s, z_norm, trials, rng)
        } else {
            orthogonal_pair_cov(a, b, d, z_norm, trials, rng)
        }
    };
    let mut total = Estimate::exact(0.0);
    if counts.pos_pos > 0 {
        total = total.plus(part_cov(pos, pos, rng).scaled(mp * mp * counts.pos_pos as f64 / s2));
    }
    if indefinite {
        let neg = sampler_of(prep, Part::Negative)?;
        if counts.neg_neg > 0 {
            total = total.plus(part_cov(neg, neg, rng).scaled(mn * mn * counts.neg_neg as f64 / s2));
        }
        total = total.plus(h_term(prep, coupling, s, z_norm, rng, trials)?);
    }
    Ok(total)
}

pub fn variance_gap(prep: &PreparedSpectrum, s: usize, z_norm: f64, rng: &mut Rng, trials: usize) -> Result<Estimate> {
    variance_gap_with(prep, Coupling::default(), s, z_norm, rng, trials)
}

/// Sample statistics of `approx_kernel` over independent models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmpiricalVariance {
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    /// Delete-one jackknife.
    pub variance_stderr: f64,
    pub trials: usize,
}

/// Leave-one-out unbiased variances, O(n).
fn loo_variances(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let c = xs.iter().sum::<f64>() / n;
    let centered: Vec<f64> = xs.iter().map(|x| x - c).collect();
    let s1: f64 = centered.iter().sum();
    let s2: f64 = centered.iter().map(|x| x * x).sum();
    centered
        .iter()
        .map(|x| {
            let m = (s1 - x) / (n - 1.0);
            ((s2 - x * x) - (n - 1.0) * m * m) / (n - 2.0)
        })
        .collect()
}

fn jackknife_se(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

fn summarize(xs: &[f64]) -> EmpiricalVariance {
    let (mean, variance) = crate::numerics::mean_var(xs);
    let n = xs.len();
    EmpiricalVariance {
        mean,
        mean_stderr: (variance / n as f64).sqrt(),
        variance,
        variance_stderr: if n > 2 { jackknife_se(&loo_variances(xs)) } else { f64::NAN },
        trials: n,
    }
}

/// Fewer models give variance estimates too noisy to report.
pub const MIN_TRIALS: usize = 100;

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::Domain(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    Ok(())
}

fn draws(
    builder: &FeatureBuilder,
    methods: &[(Method, Coupling)],
    x: &[f64],
    y: &[f64],
    s: usize,
    trials: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    let base = Rng::new(rng.next_seed());
    let rows: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let stream = base.split(t as u64);
            methods
                .iter()
                .map(|&(m, c)| {
                    // every method starts from the same state, so paired
                    // builds share their norm draws
                    let model = builder.build(m, c, s, &mut stream.clone())?;
                    approx_kernel(&model, x, y)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..methods.len()).map(|k| rows.iter().map(|r| r[k]).collect()).collect())
}

pub fn empirical_variance(
    builder: &FeatureBuilder,
    method: Method,
    coupling: Coupling,
    x: &[f64],
    y: &[f64],
    s: usize,
    trials: usize,
    rng: &mut Rng,
) -> Result<EmpiricalVariance> {
    check_trials(trials)?;
    let v = draws(builder, &[(method, coupling)], x, y, s, trials, rng)?;
    Ok(summarize(&v[0]))
}

/// Two estimators evaluated on shared random streams.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairedVariance {
    pub first: EmpiricalVariance,
    pub second: EmpiricalVariance,
    /// Var(second) − Var(first) with its paired jackknife error.
    pub difference: Estimate,
}

pub fn paired_empirical_variance(
    builder: &FeatureBuilder,
    first: (Method, Coupling),
    second: (Method, Coupling),
    x: &[f64],
    y: &[f64],
    s: usize,
    trials: usize,
    rng: &mut Rng,
) -> Result<PairedVariance> {
    check_trials(trials)?;
    let v = draws(builder, &[first, second], x, y, s, trials, rng)?;
    let a = summarize(&v[0]);
    let b = summarize(&v[1]);
    let la = loo_variances(&v[0]);
    let lb = loo_variances(&v[1]);
    let diff: Vec<f64> = lb.iter().zip(&la).map(|(p, q)| p - q).collect();
    Ok(PairedVariance {
        first: a,
        second: b,
        difference: Estimate { value: b.variance - a.variance, stderr: jackknife_se(&diff) },
    })
}

/// One grid point of a variance report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceRow {
    pub z_norm: f64,
    pub var_grff_closed: f64,
    pub var_grff_mc: f64,
    pub var_grff_mc_se: f64,
    pub var_gorf_mc: f64,
    pub var_gorf_mc_se: f64,
    pub gap_closed: f64,
    pub gap_closed_se: f64,
    pub gap_mc: f64,
    pub gap_mc_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceReport {
    pub kernel: String,
    pub d: usize,
    pub s: usize,
    pub coupling: Coupling,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<VarianceRow>,
}

#[derive(Clone, Debug)]
pub struct ReportConfig {
    pub s: usize,
    pub grid: Vec<f64>,
    /// Models per grid point for the empirical columns.
    pub trials: usize,
    /// Draws per Monte-Carlo term of the semi-closed gap.
    pub gap_trials: usize,
    pub coupling: Coupling,
    pub seed: u64,
}

pub fn variance_report(builder: &FeatureBuilder, cfg: &ReportConfig) -> Result<VarianceReport> {
    if cfg.grid.windows(2).any(|w| w[1] <= w[0]) || cfg.grid.iter().any(|z| !(*z >= 0.0)) {
        return Err(Error::Domain("z grid must be nonnegative and strictly increasing".into()));
    }
    let d = builder.dim();
    let prep = &builder.prepared;
    let root = Rng::new(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.grid.len());
    for (i, &z) in cfg.grid.iter().enumerate() {
        let mut rng = root.split(i as u64);
        let x = vec![0.0; d];
        let mut y = vec![0.0; d];
        y[0] = z;
        let gap = variance_gap_with(prep, cfg.coupling, cfg.s, z, &mut rng, cfg.gap_trials)?;
        let pair = paired_empirical_variance(
            builder,
            (Method::Grff, cfg.coupling),
            (Method::Gorf, cfg.coupling),
            &x,
            &y,
            cfg.s,
            cfg.trials,
            &mut rng,
        )?;
        rows.push(VarianceRow {
            z_norm: z,
            var_grff_closed: var_grff_closed(prep, z, cfg.s)?,
            var_grff_mc: pair.first.variance,
            var_grff_mc_se: pair.first.variance_stderr,
            var_gorf_mc: pair.second.variance,
            var_gorf_mc_se: pair.second.variance_stderr,
            gap_closed: gap.value,
            gap_closed_se: gap.stderr,
            gap_mc: pair.difference.value,
            gap_mc_se: pair.difference.stderr,
        });
    }
    Ok(VarianceReport {
        kernel: builder.spec.label(),
        d,
        s: cfg.s,
        coupling: cfg.coupling,
        trials: cfg.trials,
        seed: cfg.seed,
        rows,
    })
}

impl VarianceReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
