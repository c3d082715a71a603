//! Radial signed spectral measures.
//!
//! A stationary kernel on R^d with radial profile k(‖z‖) is written as
//! `k(z) = ∫ e^{i wᵀz} p(‖w‖) dw`. The density `p` may take both signs; its
//! Jordan parts `p₊ = max(0, p)` and `p₋ = max(0, −p)` carry total masses
//! `‖p₊‖ = S_{d−1} ∫ r^{d−1} p₊(r) dr` (and likewise for `p₋`), where
//! `S_{d−1}` is the area of the unit sphere. The surface factor is what
//! makes `‖p₊‖ − ‖p₋‖ = k(0)` hold, which is used below as a calibration.
//!
//! The positive and negative parts are tracked as a list of sign-constant
//! pieces found by scanning a grid and bisecting each sign change.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::special::ln_sphere_area;
use crate::numerics::{integrate, integrate_with, Rng};

/// Radial profile r ↦ p(r).
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which Jordan part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Part {
    Positive,
    Negative,
}

impl Part {
    fn sign(self) -> f64 {
        match self {
            Part::Positive => 1.0,
            Part::Negative => -1.0,
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            Part::Positive => "positive",
            Part::Negative => "negative",
        }
    }
}

/// Pointwise max(0, p) and max(0, −p).
pub fn jordan_decompose(profile: Profile) -> (Profile, Profile) {
    let p1 = profile.clone();
    let pos: Profile = Arc::new(move |r| p1(r).max(0.0));
    let neg: Profile = Arc::new(move |r| (-profile(r)).max(0.0));
    (pos, neg)
}

/// Hints that tell the scanner where the profile lives.
#[derive(Clone, Copy, Debug)]
pub struct ScanHint {
    /// Radius by which essentially all mass is expected to be enclosed.
    pub extent: f64,
    /// Upper bound on grid spacing needed to see every sign change.
    pub max_step: f64,
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    lo: f64,
    hi: f64, // may be +inf for the last piece
    sign: f64,
    mass: f64, // raw, unsigned
}

const MASS_REL_TOL: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 14;

/// Signed radial spectrum with its Jordan decomposition and masses.
#[derive(Clone)]
pub struct RadialSignedSpectrum {
    dim: usize,
    profile: Profile,
    pieces: Vec<Piece>,
    raw_mass_pos: f64,
    raw_mass_neg: f64,
    calibration: f64,
    k0: f64,
    r_end: f64,
}

impl std::fmt::Debug for RadialSignedSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialSignedSpectrum")
            .field("dim", &self.dim)
            .field("mass_pos", &self.mass_pos())
            .field("mass_neg", &self.mass_neg())
            .field("calibration", &self.calibration)
            .field("pieces", &self.pieces.len())
            .finish()
    }
}

/// S_{d−1} r^{d−1}.
pub fn radial_jacobian(dim: usize, r: f64) -> f64 {
    if dim == 1 {
        return 2.0;
    }
    if r == 0.0 {
        return 0.0;
    }
    (ln_sphere_area(dim) + (dim as f64 - 1.0) * r.ln()).exp()
}

fn sign_of(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn bisect_root(p: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, s_lo: f64) -> f64 {
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let sm = sign_of(p(mid));
        if sm == s_lo {
            lo = mid;
        } else if sm == 0.0 {
            return mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sign changes of `p` on [a, b] using `cells` equal cells. Returns the
/// refined roots and the last nonzero sign seen.
fn scan_sign_changes(p: &dyn Fn(f64) -> f64, a: f64, b: f64, cells: usize, mut last: (f64, f64)) -> (Vec<f64>, (f64, f64)) {
    // `last` is (position, sign) of the latest nonzero sample
    let mut roots = Vec::new();
    let h = (b - a) / cells as f64;
    for i in 0..=cells {
        let r = if i == cells { b } else { a + h * i as f64 };
        let s = sign_of(p(r));
        if s == 0.0 {
            continue;
        }
        if last.1 != 0.0 && s != last.1 {
            roots.push(bisect_root(p, last.0, r, last.1));
        }
        last = (r, s);
    }
    (roots, last)
}

impl RadialSignedSpectrum {
    /// Scan, decompose and integrate a radial profile. `k0` is the kernel
    /// value at the origin used for calibration.
    pub fn build(dim: usize, profile: Profile, k0: f64, hint: ScanHint) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let p = profile.clone();
        let pf = move |r: f64| p(r);
        let weighted = |r: f64| radial_jacobian(dim, r) * pf(r);

        let cells_for = |len: f64| ((len / hint.max_step).ceil() as usize).clamp(64, 2_000_000);
        let (mut roots, mut last) = scan_sign_changes(&pf, 0.0, hint.extent, cells_for(hint.extent), (0.0, 0.0));
        let mut breaks = vec![0.0];
        breaks.append(&mut roots);
        let mut pieces: Vec<Piece> = Vec::new();

        let close_pieces = |breaks: &mut Vec<f64>, upto: f64, pieces: &mut Vec<Piece>, so_far: f64| -> Result<f64> {
            // turn breakpoints ending at `upto` into finished pieces
            let mut added = 0.0;
            breaks.push(upto);
            for w in breaks.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                if hi <= lo {
                    continue;
                }
                let mid = 0.5 * (lo + hi);
                let mut s = sign_of(pf(mid));
                if s == 0.0 {
                    s = sign_of(pf(lo + 0.25 * (hi - lo))) + sign_of(pf(lo + 0.75 * (hi - lo)));
                    s = sign_of(s);
                }
                let floor = (1e-17 * so_far).max(1e-300);
                let mass = integrate_with(|r| weighted(r).abs(), lo, hi, MASS_REL_TOL, floor, 20_000)?;
                added += mass;
                pieces.push(Piece { lo, hi, sign: if s == 0.0 { 1.0 } else { s }, mass });
            }
            let end = *breaks.last().unwrap();
            breaks.clear();
            breaks.push(end);
            Ok(added)
        };

        let mut total = close_pieces(&mut breaks, hint.extent, &mut pieces, 0.0)?;

        // Grow the range until the increments become negligible; increments
        // that refuse to shrink mean the measure is not finite.
        let mut r = hint.extent;
        let mut prev_inc = f64::INFINITY;
        let mut stalls = 0;
        let mut converged = false;
        for _ in 0..MAX_DOUBLINGS {
            let (mut more, l2) = scan_sign_changes(&pf, r, 2.0 * r, cells_for(r), last);
            last = l2;
            breaks.append(&mut more);
            let inc = close_pieces(&mut breaks, 2.0 * r, &mut pieces, total)?;
            total += inc;
            r *= 2.0;
            if inc <= 1e-15 * total {
                converged = true;
                break;
            }
            if inc >= 0.5 * prev_inc {
                stalls += 1;
                if stalls >= 3 {
                    return Err(Error::InfiniteMass(format!(
                        "mass over [{:.3}, {:.3}] is {:.3e} and not decaying",
                        r / 2.0,
                        r,
                        inc
                    )));
                }
            } else {
                stalls = 0;
            }
            prev_inc = inc;
        }
        if !converged || !total.is_finite() {
            return Err(Error::InfiniteMass(format!("partial masses still growing at radius {r:.3}")));
        }
        // remaining tail, mapped to a finite range
        let tail = integrate_with(|x| weighted(x).abs(), r, f64::INFINITY, 1e-6, 1e-300, 2000).unwrap_or(0.0);
        let tail_sign = if last.1 == 0.0 { 1.0 } else { last.1 };
        pieces.push(Piece { lo: r, hi: f64::INFINITY, sign: tail_sign, mass: tail });

        // merge neighbours with the same sign
        let mut merged: Vec<Piece> = Vec::new();
        for pc in pieces {
            match merged.last_mut() {
                Some(m) if m.sign == pc.sign && m.hi == pc.lo => {
                    m.hi = pc.hi;
                    m.mass += pc.mass;
                }
                _ => merged.push(pc),
            }
        }

        let raw_mass_pos: f64 = merged.iter().filter(|p| p.sign > 0.0).map(|p| p.mass).sum();
        let raw_mass_neg: f64 = merged.iter().filter(|p| p.sign < 0.0).map(|p| p.mass).sum();
        let diff = raw_mass_pos - raw_mass_neg;
        let calibration = if k0.abs() > 1e-9 * (raw_mass_pos + raw_mass_neg) && diff != 0.0 {
            k0 / diff
        } else {
            1.0
        };
        Ok(RadialSignedSpectrum {
            dim,
            profile,
            pieces: merged,
            raw_mass_pos,
            raw_mass_neg,
            calibration,
            k0,
            r_end: r,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn profile(&self) -> &Profile {
        &self.profile
    }
    pub fn eval(&self, r: f64) -> f64 {
        (self.profile)(r)
    }
    pub fn pos_profile(&self, r: f64) -> f64 {
        self.eval(r).max(0.0)
    }
    pub fn neg_profile(&self, r: f64) -> f64 {
        (-self.eval(r)).max(0.0)
    }
    /// Calibrated ‖p₊‖.
    pub fn mass_pos(&self) -> f64 {
        self.calibration * self.raw_mass_pos
    }
    /// Calibrated ‖p₋‖.
    pub fn mass_neg(&self) -> f64 {
        self.calibration * self.raw_mass_neg
    }
    /// Masses straight from quadrature, before calibration.
    pub fn raw_masses(&self) -> (f64, f64) {
        (self.raw_mass_pos, self.raw_mass_neg)
    }
    pub fn calibration(&self) -> f64 {
        self.calibration
    }
    pub fn k0(&self) -> f64 {
        self.k0
    }
    /// Radius beyond which the remaining mass is below 1e-15 of the total.
    pub fn effective_radius(&self) -> f64 {
        self.r_end
    }
    /// Sign changes of the profile, in increasing order.
    pub fn sign_changes(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|p| p.lo).filter(|r| *r < self.r_end).collect()
    }
    pub fn mass(&self, part: Part) -> f64 {
        match part {
            Part::Positive => self.mass_pos(),
            Part::Negative => self.mass_neg(),
        }
    }
    pub fn is_positive_definite(&self) -> bool {
        self.raw_mass_neg <= 1e-14 * self.raw_mass_pos
    }
}

/// (mass_pos, mass_neg), calibrated.
pub fn total_masses(spectrum: &RadialSignedSpectrum) -> (f64, f64) {
    (spectrum.mass_pos(), spectrum.mass_neg())
}

/// Probability density over the norm r = ‖w‖.
#[derive(Clone)]
pub struct NormDensity {
    pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support: Vec<(f64, f64)>,
    upper: f64,
    tag: Option<Part>,
}

impl std::fmt::Debug for NormDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NormDensity").field("support", &self.support).field("tag", &self.tag).finish()
    }
}

impl NormDensity {
    /// Density from an arbitrary function supported on the given intervals.
    /// `upper` bounds the region used for tabulation.
    pub fn from_fn(pdf: impl Fn(f64) -> f64 + Send + Sync + 'static, support: Vec<(f64, f64)>, upper: f64) -> Self {
        NormDensity {
            pdf: Arc::new(pdf),
            support,
            upper,
            tag: None,
        }
    }
    pub fn pdf(&self, r: f64) -> f64 {
        (self.pdf)(r)
    }
    pub fn tag(&self) -> Option<Part> {
        self.tag
    }
    /// ∫ pdf(r) g(r) dr over the support.
    pub fn expect(&self, g: impl Fn(f64) -> f64, rel_tol: f64) -> Result<f64> {
        let mut acc = 0.0;
        for &(lo, hi) in &self.support {
            acc += integrate_with(|r| self.pdf(r) * g(r), lo, hi, rel_tol, 1e-15, 20_000)?;
        }
        Ok(acc)
    }
}

/// The normalized Jordan part p̃± as a density over ‖w‖, including the
/// surface factor.
pub fn normalized_part(spectrum: &RadialSignedSpectrum, part: Part) -> Result<NormDensity> {
    let (raw_pos, raw_neg) = spectrum.raw_masses();
    let raw = match part {
        Part::Positive => raw_pos,
        Part::Negative => raw_neg,
    };
    if !(raw > 1e-14 * (raw_pos + raw_neg)) {
        return Err(Error::ZeroMass(part.name()));
    }
    let s = part.sign();
    let support: Vec<(f64, f64)> = spectrum
        .pieces
        .iter()
        .filter(|p| p.sign == s && p.mass > 0.0)
        .map(|p| (p.lo, p.hi))
        .collect();
    let prof = spectrum.profile.clone();
    let dim = spectrum.dim;
    Ok(NormDensity {
        pdf: Arc::new(move |r| radial_jacobian(dim, r) * (s * prof(r)).max(0.0) / raw),
        support,
        upper: spectrum.r_end,
        tag: Some(part),
    })
}

/// Tabulated inverse-CDF sampler for a [`NormDensity`].
#[derive(Clone, Debug)]
pub struct NormSampler {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    r_max: f64,
    tag: Option<Part>,
}

/// Number of CDF grid points.
pub const SAMPLER_GRID: usize = 4096;
const SAMPLER_DECADES: f64 = 6.0;

/// Tabulate the CDF on log-spaced points (the first point is 0) and cut at
/// the first point whose CDF reaches 1 − `rel_tail_tol`.
pub fn build_norm_sampler(density: &NormDensity, rel_tail_tol: f64) -> Result<NormSampler> {
    let mut total = 0.0;
    for &(lo, hi) in &density.support {
        total += integrate_with(|r| density.pdf(r), lo, hi, 1e-10, 1e-300, 20_000)?;
    }
    if !(total > 0.0) {
        return Err(Error::Tabulation("density has no mass".into()));
    }
    let top = density.upper;
    let bottom = top * 10f64.powf(-SAMPLER_DECADES);
    let n = SAMPLER_GRID;
    let mut grid = Vec::with_capacity(n);
    grid.push(0.0);
    for i in 0..n - 1 {
        let t = i as f64 / (n - 2) as f64;
        grid.push(bottom * (top / bottom).powf(t));
    }
    grid[n - 1] = top;
    // kinks of the part sit at support boundaries; integrating cell by cell
    // with adaptive quadrature copes with them
    let mut cdf = vec![0.0; n];
    let mut acc = 0.0;
    for i in 1..n {
        let (a, b) = (grid[i - 1], grid[i]);
        let mut cell = 0.0;
        for &(lo, hi) in &density.support {
            let l = a.max(lo);
            let h = b.min(hi);
            if h > l {
                cell += integrate_with(|r| density.pdf(r), l, h, 1e-10, 1e-14 * total / n as f64, 2000)?;
            }
        }
        acc += cell;
        cdf[i] = acc / total;
    }
    let reach = 1.0 - rel_tail_tol;
    let cut = match cdf.iter().position(|&c| c >= reach) {
        Some(i) => i,
        None => {
            return Err(Error::Tabulation(format!(
                "CDF only reaches {:.3e} of the mass within radius {top:.3}",
                cdf[n - 1]
            )))
        }
    };
    grid.truncate(cut + 1);
    cdf.truncate(cut + 1);
    let last = cdf[cut];
    for c in cdf.iter_mut() {
        *c /= last;
    }
    Ok(NormSampler {
        r_max: grid[cut],
        grid,
        cdf,
        tag: density.tag,
    })
}

impl NormSampler {
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn tag(&self) -> Option<Part> {
        self.tag
    }
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    /// Tabulated (piecewise-linear) CDF at r.
    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= self.r_max {
            return 1.0;
        }
        let i = self.grid.partition_point(|&g| g <= r) - 1;
        let (a, b) = (self.grid[i], self.grid[i + 1]);
        let t = (r - a) / (b - a);
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Inverse CDF at u ∈ [0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        // first cell whose right CDF exceeds u, so flat cells are skipped
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (a, b) = (self.grid[i - 1], self.grid[i]);
        if c1 <= c0 {
            return b;
        }
        (a + (u - c0) / (c1 - c0) * (b - a)).clamp(0.0, self.r_max)
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        self.quantile(rng.uniform())
    }
}

/// `count` i.i.d. norms.
pub fn sample_norms(sampler: &NormSampler, rng: &mut Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| sampler.sample(rng)).collect()
}

/// Both normalized parts with their samplers, ready for feature builders.
#[derive(Clone, Debug)]
pub struct PreparedSpectrum {
    pub spectrum: RadialSignedSpectrum,
    pub pos: Option<(NormDensity, NormSampler)>,
    pub neg: Option<(NormDensity, NormSampler)>,
}

/// Default tail tolerance for samplers.
pub const TAIL_TOL: f64 = 1e-8;

impl PreparedSpectrum {
    pub fn new(spectrum: RadialSignedSpectrum) -> Result<Self> {
        let make = |part| -> Result<Option<(NormDensity, NormSampler)>> {
            match normalized_part(&spectrum, part) {
                Ok(d) => {
                    let s = build_norm_sampler(&d, TAIL_TOL)?;
                    Ok(Some((d, s)))
                }
                Err(Error::ZeroMass(_)) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let pos = make(Part::Positive)?;
        let neg = make(Part::Negative)?;
        if pos.is_none() {
            return Err(Error::ZeroMass("positive"));
        }
        Ok(PreparedSpectrum { spectrum, pos, neg })
    }

    pub fn part(&self, part: Part) -> Option<&(NormDensity, NormSampler)> {
        match part {
            Part::Positive => self.pos.as_ref(),
            Part::Negative => self.neg.as_ref(),
        }
    }

    /// Masses as used by the feature map (zero for an absent part).
    pub fn masses(&self) -> (f64, f64) {
        let neg = if self.neg.is_some() { self.spectrum.mass_neg() } else { 0.0 };
        (self.spectrum.mass_pos(), neg)
    }
}

/// Write `points` rows of `r, p, p_pos, p_neg, cdf_pos, cdf_neg` covering
/// [0, r_max] of the wider sampler.
pub fn dump_csv<W: Write>(prep: &PreparedSpectrum, points: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "p", "p_pos", "p_neg", "cdf_pos", "cdf_neg"])
        .map_err(|e| Error::Serde(e.to_string()))?;
    let top = prep
        .pos
        .iter()
        .chain(prep.neg.iter())
        .map(|(_, s)| s.r_max())
        .fold(0.0, f64::max);
    for i in 0..points {
        let r = top * i as f64 / (points.max(2) - 1) as f64;
        let p = prep.spectrum.eval(r);
        let cp = prep.pos.as_ref().map_or(0.0, |(_, s)| s.cdf(r));
        let cn = prep.neg.as_ref().map_or(0.0, |(_, s)| s.cdf(r));
        w.write_record([r, p, p.max(0.0), (-p).max(0.0), cp, cn].map(|v| format!("{v:.12e}")))
            .map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// ∫₀^∞ f, re-exported for callers that want the quadrature convention
/// used by this module.
pub fn integrate_radial(f: impl Fn(f64) -> f64, rel_tol: f64) -> Result<f64> {
    integrate(f, 0.0, f64::INFINITY, rel_tol)
}
