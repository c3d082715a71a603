//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_9,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_489_0,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

/// Default subdivision budget for [`integrate`].
pub const DEFAULT_MAX_SUBDIVISIONS: usize = 4000;

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// One 15-point rule: (kronrod value, error estimate, ∫|f| estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for i in 0..7 {
        let dx = h * XGK[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        k += WGK[i] * (f1 + f2);
        abs += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

/// Adaptive integration with an explicit absolute floor and budget.
/// `b` may be `f64::INFINITY`; the tail is then mapped onto a finite range
/// with r = a + u/(1-u).
pub fn integrate_with<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a.is_infinite() {
        return Err(Error::Domain(format!("bad integration limits [{a}, {b}]")));
    }
    if b == f64::INFINITY {
        let g = |u: f64| {
            let om = 1.0 - u;
            let v = f(a + u / om) / (om * om);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        return adapt(&g, 0.0, 1.0, rel_tol, abs_tol, max_subdivisions)
            .map_err(|e| relabel(e, a, b));
    }
    if a == b {
        return Ok(0.0);
    }
    adapt(&f, a, b, rel_tol, abs_tol, max_subdivisions)
}

fn relabel(e: Error, a: f64, b: f64) -> Error {
    match e {
        Error::NonConvergence { evals, .. } => Error::NonConvergence { a, b, evals },
        other => other,
    }
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<f64> {
    let (v, e, abs) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let mut total = v;
    let mut total_err = e;
    let mut total_abs = abs;
    let mut evals = 15;
    loop {
        let floor = abs_tol.max(64.0 * f64::EPSILON * total_abs);
        if total_err <= (rel_tol * total.abs()).max(floor) {
            return Ok(total);
        }
        if heap.len() >= max_subdivisions {
            return Err(Error::NonConvergence { a, b, evals });
        }
        let seg = heap.pop().expect("heap never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval can no longer be split in floating point
            return Err(Error::NonConvergence { a, b, evals });
        }
        let (v1, e1, a1) = gk15(f, seg.a, mid);
        let (v2, e2, a2) = gk15(f, mid, seg.b);
        evals += 30;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.err;
        total_abs += a1 + a2;
        heap.push(Segment { a: seg.a, b: mid, value: v1, err: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, err: e2 });
        if !total.is_finite() {
            return Err(Error::NonConvergence { a, b, evals });
        }
        // re-sum occasionally so the running error does not drift
        if evals % 3000 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.err).sum();
        }
    }
}

/// ∫_a^b f with estimated relative error ≤ `rel_tol`. `b` may be +∞.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    integrate_with(f, a, b, rel_tol, 0.0, DEFAULT_MAX_SUBDIVISIONS)
}
