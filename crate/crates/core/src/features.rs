//! Random feature maps for stationary kernels with signed spectra.
//!
//! A model holds two frequency matrices, `W_pos` (d×s) sampled from the
//! normalized positive part and `W_neg` (d×s) from the negative part. The
//! lifted vector of x is
//!
//! `[√(m₊/s) cos(W_posᵀx); √(m₊/s) sin(W_posᵀx); √(m₋/s) cos(W_negᵀx); √(m₋/s) sin(W_negᵀx)]`
//!
//! read with a (+, +, −, −) metric, so the signed inner product of two lifts
//! is `(m₊/s) Σ cos(wᵢᵀ(x−y)) − (m₋/s) Σ cos(υᵢᵀ(x−y))`.
//!
//! Orthogonal models couple the directions of the columns. Three couplings
//! are available:
//!
//! * [`Coupling::Stacked`] (default): independent Haar d×d blocks laid side
//!   by side; `wᵢ` takes column i and `υᵢ` column s+i. Columns in the same
//!   block are exactly orthogonal, so for 2s ≤ d the positive and negative
//!   directions are coupled with each other as well.
//! * [`Coupling::Truncated`]: one 2m×2m Haar matrix with m = max(s, d), keep
//!   the first d rows and renormalize every column. Columns are then only
//!   approximately orthogonal.
//! * [`Coupling::Block`]: `W_pos` and `W_neg` are independent orthogonal
//!   stacks.
//!
//! Directions and norms are drawn from two separate sub-streams of the
//! caller's generator, so an i.i.d. and an orthogonal model built from the
//! same generator state share their norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{spectral_profile, KernelSpec};
use crate::numerics::{haar_orthogonal, norm, qr_orthonormal, sample_gaussian_matrix, DenseMatrix, Rng};
use crate::spectrum::{NormSampler, Part, PreparedSpectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grff,
    Gorf,
    Rff,
    Orf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Grff => "GRFF",
            Method::Gorf => "GORF",
            Method::Rff => "RFF",
            Method::Orf => "ORF",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    #[default]
    Stacked,
    Truncated,
    Block,
}

impl Coupling {
    pub fn name(self) -> &'static str {
        match self {
            Coupling::Stacked => "stacked",
            Coupling::Truncated => "truncated",
            Coupling::Block => "block",
        }
    }
}

/// A materialized feature map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub method: Method,
    /// Present for orthogonal methods.
    pub coupling: Option<Coupling>,
    pub kernel: KernelSpec,
    pub s: usize,
    pub w_pos: DenseMatrix,
    pub w_neg: Option<DenseMatrix>,
    pub mass_pos: f64,
    pub mass_neg: f64,
    pub seed: u64,
}

/// Real lifted vector with a (+, −) signature split after the first 2s
/// entries.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedVector {
    pub values: Vec<f64>,
    pub s: usize,
}

impl LiftedVector {
    pub fn signature(&self, i: usize) -> f64 {
        if i < 2 * self.s {
            1.0
        } else {
            -1.0
        }
    }

    /// Inner product under the signature.
    pub fn signed_dot(&self, other: &LiftedVector) -> f64 {
        let h = 2 * self.s;
        let pos: f64 = self.values[..h].iter().zip(&other.values[..h]).map(|(a, b)| a * b).sum();
        let neg: f64 = self.values[h..].iter().zip(&other.values[h..]).map(|(a, b)| a * b).sum();
        pos - neg
    }
}

/// Spectrum plus samplers for one kernel, reusable across many builds.
#[derive(Clone, Debug)]
pub struct FeatureBuilder {
    pub spec: KernelSpec,
    pub prepared: PreparedSpectrum,
}

fn unit_columns(m: &mut DenseMatrix) {
    for j in 0..m.cols() {
        let n = norm(m.col(j));
        for x in m.col_mut(j) {
            *x /= n;
        }
    }
}

fn scale_columns(m: &mut DenseMatrix, sampler: &NormSampler, rng: &mut Rng) {
    for j in 0..m.cols() {
        let r = sampler.sample(rng);
        for x in m.col_mut(j) {
            *x *= r;
        }
    }
}

/// Uniform directions as unit columns.
fn iid_directions(rng: &mut Rng, d: usize, s: usize) -> DenseMatrix {
    let mut m = sample_gaussian_matrix(rng, d, s);
    unit_columns(&mut m);
    m
}

/// `cols` columns taken from consecutive independent d×d Haar blocks.
fn stacked_directions(rng: &mut Rng, d: usize, cols: usize) -> Result<DenseMatrix> {
    let blocks = cols.div_ceil(d);
    let mut parts = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        parts.push(haar_orthogonal(rng, d)?);
    }
    Ok(DenseMatrix::hcat(&parts).columns(0..cols))
}

/// First d rows of a 2m×2m Haar matrix, columns renormalized.
fn truncated_directions(rng: &mut Rng, d: usize, s: usize) -> Result<DenseMatrix> {
    let m = s.max(d);
    let q = qr_orthonormal(&sample_gaussian_matrix(rng, 2 * m, 2 * m))?;
    let mut top = q.top_rows(d);
    unit_columns(&mut top);
    Ok(top.columns(0..2 * s))
}

impl FeatureBuilder {
    pub fn new(spec: &KernelSpec) -> Result<Self> {
        let spectrum = spectral_profile(spec)?;
        Ok(FeatureBuilder {
            spec: spec.clone(),
            prepared: PreparedSpectrum::new(spectrum)?,
        })
    }

    pub fn from_prepared(spec: &KernelSpec, prepared: PreparedSpectrum) -> Self {
        FeatureBuilder { spec: spec.clone(), prepared }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn is_positive_definite(&self) -> bool {
        self.prepared.neg.is_none()
    }

    fn sampler(&self, part: Part) -> Option<&NormSampler> {
        self.prepared.part(part).map(|(_, s)| s)
    }

    fn streams(rng: &mut Rng) -> (u64, Rng, Rng) {
        let seed = rng.next_seed();
        let base = Rng::new(seed);
        (seed, base.split(0), base.split(1))
    }

    fn finish(
        &self,
        method: Method,
        coupling: Option<Coupling>,
        s: usize,
        mut pos_dirs: DenseMatrix,
        neg_dirs: Option<DenseMatrix>,
        norm_rng: &mut Rng,
        seed: u64,
    ) -> FeatureModel {
        let (mass_pos, mass_neg) = self.prepared.masses();
        scale_columns(&mut pos_dirs, self.sampler(Part::Positive).expect("positive part"), norm_rng);
        let w_neg = neg_dirs.map(|mut nd| {
            scale_columns(&mut nd, self.sampler(Part::Negative).expect("negative part"), norm_rng);
            nd
        });
        FeatureModel {
            method,
            coupling,
            kernel: self.spec.clone(),
            s,
            w_pos: pos_dirs,
            w_neg,
            mass_pos,
            mass_neg: if self.is_positive_definite() { 0.0 } else { mass_neg },
            seed,
        }
    }

    /// Fully independent columns. For a positive definite kernel this is
    /// classic random Fourier features.
    pub fn build_grff(&self, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
        self.grff_tagged(s, rng, Method::Grff)
    }

    fn grff_tagged(&self, s: usize, rng: &mut Rng, method: Method) -> Result<FeatureModel> {
        if s == 0 {
            return Err(Error::Domain("feature count must be positive".into()));
        }
        let d = self.dim();
        let (seed, mut dir_rng, mut norm_rng) = Self::streams(rng);
        let pos = iid_directions(&mut dir_rng, d, s);
        let neg = (!self.is_positive_definite()).then(|| iid_directions(&mut dir_rng, d, s));
        Ok(self.finish(method, None, s, pos, neg, &mut norm_rng, seed))
    }

    /// Orthogonally coupled columns with the default coupling.
    pub fn build_gorf(&self, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
        self.build_gorf_with(s, Coupling::default(), rng)
    }

    /// Orthogonally coupled columns. Positive definite kernels go through
    /// [`FeatureBuilder::build_orf`], so both paths agree for the same seed.
    pub fn build_gorf_with(&self, s: usize, coupling: Coupling, rng: &mut Rng) -> Result<FeatureModel> {
        if s == 0 {
            return Err(Error::Domain("feature count must be positive".into()));
        }
        if self.is_positive_definite() {
            let mut m = self.orf_tagged(s, rng)?;
            m.method = Method::Gorf;
            return Ok(m);
        }
        let d = self.dim();
        let (seed, mut dir_rng, mut norm_rng) = Self::streams(rng);
        let (pos, neg) = match coupling {
            Coupling::Stacked => {
                let all = stacked_directions(&mut dir_rng, d, 2 * s)?;
                (all.columns(0..s), all.columns(s..2 * s))
            }
            Coupling::Truncated => {
                let all = truncated_directions(&mut dir_rng, d, s)?;
                (all.columns(0..s), all.columns(s..2 * s))
            }
            Coupling::Block => (
                stacked_directions(&mut dir_rng, d, s)?,
                stacked_directions(&mut dir_rng, d, s)?,
            ),
        };
        Ok(self.finish(Method::Gorf, Some(coupling), s, pos, Some(neg), &mut norm_rng, seed))
    }

    fn require_pd(&self) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::Indefinite(self.prepared.spectrum.mass_neg()))
        }
    }

    pub fn build_rff(&self, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
        self.require_pd()?;
        self.grff_tagged(s, rng, Method::Rff)
    }

    /// Orthogonal random features: columns from stacked independent d×d
    /// Haar blocks, so any s (also s > d) is allowed.
    pub fn build_orf(&self, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
        self.require_pd()?;
        if s == 0 {
            return Err(Error::Domain("feature count must be positive".into()));
        }
        self.orf_tagged(s, rng)
    }

    fn orf_tagged(&self, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
        let (seed, mut dir_rng, mut norm_rng) = Self::streams(rng);
        let pos = stacked_directions(&mut dir_rng, self.dim(), s)?;
        Ok(self.finish(Method::Orf, Some(Coupling::Stacked), s, pos, None, &mut norm_rng, seed))
    }

    pub fn build(&self, method: Method, coupling: Coupling, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
        match method {
            Method::Grff => self.build_grff(s, rng),
            Method::Gorf => self.build_gorf_with(s, coupling, rng),
            Method::Rff => self.build_rff(s, rng),
            Method::Orf => self.build_orf(s, rng),
        }
    }
}

pub fn build_grff(spec: &KernelSpec, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
    FeatureBuilder::new(spec)?.build_grff(s, rng)
}
pub fn build_gorf(spec: &KernelSpec, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
    FeatureBuilder::new(spec)?.build_gorf(s, rng)
}
pub fn build_rff(spec: &KernelSpec, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
    FeatureBuilder::new(spec)?.build_rff(s, rng)
}
pub fn build_orf(spec: &KernelSpec, s: usize, rng: &mut Rng) -> Result<FeatureModel> {
    FeatureBuilder::new(spec)?.build_orf(s, rng)
}

fn project(w: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (0..w.cols()).map(|j| crate::numerics::dot(w.col(j), x)).collect()
}

impl FeatureModel {
    pub fn dim(&self) -> usize {
        self.w_pos.rows()
    }

    /// Signed sum of cosines at lag z = x − y.
    pub fn eval_lag(&self, z: &[f64]) -> f64 {
        let s = self.s as f64;
        let pos: f64 = project(&self.w_pos, z).iter().map(|t| t.cos()).sum();
        let neg: f64 = match &self.w_neg {
            Some(w) => project(w, z).iter().map(|t| t.cos()).sum(),
            None => 0.0,
        };
        self.mass_pos / s * pos - self.mass_neg / s * neg
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("models always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Write the 4s lifted entries of `x` into `out`.
    pub fn lift_into(&self, x: &[f64], out: &mut [f64]) {
        let s = self.s;
        let cp = (self.mass_pos / s as f64).sqrt();
        for (j, t) in project(&self.w_pos, x).into_iter().enumerate() {
            out[j] = cp * t.cos();
            out[s + j] = cp * t.sin();
        }
        match &self.w_neg {
            Some(w) => {
                let cn = (self.mass_neg / s as f64).sqrt();
                for (j, t) in project(w, x).into_iter().enumerate() {
                    out[2 * s + j] = cn * t.cos();
                    out[3 * s + j] = cn * t.sin();
                }
            }
            None => out[2 * s..4 * s].iter_mut().for_each(|v| *v = 0.0),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }
}

pub fn lift(model: &FeatureModel, x: &[f64]) -> Result<LiftedVector> {
    model.check_dim(x)?;
    let mut values = vec![0.0; 4 * model.s];
    model.lift_into(x, &mut values);
    Ok(LiftedVector { values, s: model.s })
}

/// φ(x)ᵀφ(y) under the signature.
pub fn approx_kernel(model: &FeatureModel, x: &[f64], y: &[f64]) -> Result<f64> {
    model.check_dim(x)?;
    model.check_dim(y)?;
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(model.eval_lag(&z))
}

/// Lifted design matrix, one row of 4s entries per row of `x`, stored
/// row-major.
pub fn lift_rows(model: &FeatureModel, x: &DenseMatrix) -> Result<Vec<f64>> {
    if x.cols() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.cols() });
    }
    use rayon::prelude::*;
    let w = 4 * model.s;
    let mut out = vec![0.0; x.rows() * w];
    out.par_chunks_mut(w).enumerate().for_each(|(i, row)| {
        model.lift_into(&x.row(i), row);
    });
    Ok(out)
}

/// Signed Gram matrix of row-major lifted features: columns `[0, split)`
/// count positively and `[split, width)` negatively.
pub fn signed_gram(rows: &[f64], n: usize, width: usize, split: usize) -> DenseMatrix {
    use rayon::prelude::*;
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let rj = &rows[j * width..(j + 1) * width];
            (0..n)
                .map(|i| {
                    let ri = &rows[i * width..(i + 1) * width];
                    let pos: f64 = ri[..split].iter().zip(&rj[..split]).map(|(a, b)| a * b).sum();
                    let neg: f64 = ri[split..].iter().zip(&rj[split..]).map(|(a, b)| a * b).sum();
                    pos - neg
                })
                .collect()
        })
        .collect();
    let mut g = DenseMatrix::zeros(n, n);
    for (j, c) in cols.into_iter().enumerate() {
        g.col_mut(j).copy_from_slice(&c);
    }
    g
}

/// Approximate Gram matrix of the rows of `x`.
pub fn approx_gram(model: &FeatureModel, x: &DenseMatrix) -> Result<DenseMatrix> {
    let rows = lift_rows(model, x)?;
    Ok(signed_gram(&rows, x.rows(), 4 * model.s, 2 * model.s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_blocks_are_orthonormal() {
        let mut rng = Rng::new(5);
        let m = stacked_directions(&mut rng, 4, 10).unwrap();
        assert_eq!(m.cols(), 10);
        for b in 0..2 {
            let blk = m.columns(4 * b..4 * b + 4);
            let g = blk.transpose().matmul(&blk);
            assert!(g.max_abs_diff(&DenseMatrix::identity(4)) < 1e-12);
        }
    }

    #[test]
    fn truncated_columns_have_unit_norm() {
        let mut rng = Rng::new(9);
        let m = truncated_directions(&mut rng, 6, 6).unwrap();
        assert_eq!((m.rows(), m.cols()), (6, 12));
        for j in 0..12 {
            assert!((norm(m.col(j)) - 1.0).abs() < 1e-12);
        }
    }
}
