//! Gamma and Bessel functions.
//!
//! `bessel_j` covers real order ν ≥ 0 and argument x ≥ 0. Small arguments
//! (x < 5, or x²/4 < ν + 1 where the series terms shrink from the start)
//! use the ascending series. Everything else goes through Miller's backward
//! recurrence, normalized with the Neumann-type identity
//! `(x/2)^f = Σ_k (f+2k) Γ(f+k)/k! · J_{f+2k}(x)` for fractional part f > 0
//! and `1 = J_0 + 2 Σ_k J_{2k}` for integer orders.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(x: f64) -> f64 {
    // x here is the shifted argument (Γ(x+1) form)
    let mut a = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    a
}

/// Γ(x) for x > 0. Integer arguments up to 170 are returned as exact
/// factorials.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma_fn requires x > 0, got {x}")));
    }
    if x == x.floor() && x <= 171.0 {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return Ok(f);
    }
    if x < 0.5 {
        // Γ(x) = Γ(x+1)/x keeps us inside the accurate range
        return Ok(gamma_fn(x + 1.0)? / x);
    }
    if x > 171.7 {
        return Ok(f64::INFINITY);
    }
    let xm = x - 1.0;
    let t = xm + LANCZOS_G + 0.5;
    // split the power to delay overflow for x near 171
    let half = t.powf((xm + 0.5) / 2.0);
    Ok((2.0 * PI).sqrt() * half * (half * (-t).exp()) * lanczos_sum(xm))
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    if x < 0.5 {
        return Ok(ln_gamma(x + 1.0)? - x.ln());
    }
    let xm = x - 1.0;
    let t = xm + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (xm + 0.5) * t.ln() - t + lanczos_sum(xm).ln())
}

/// Γ for arguments known to be positive and finite.
pub(crate) fn gamma_pos(x: f64) -> f64 {
    gamma_fn(x).expect("positive gamma argument")
}

pub(crate) fn ln_gamma_pos(x: f64) -> f64 {
    ln_gamma(x).expect("positive gamma argument")
}

/// Σ_k (−x²/4)^k / (k! Γ(ν+k+1)), i.e. J_ν(x) / (x/2)^ν.
fn reduced_series(nu: f64, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0 / gamma_pos(nu + 1.0);
    let mut sum = term;
    for k in 1..500 {
        let kf = k as f64;
        term *= q / (kf * (nu + kf));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn use_series(nu: f64, x: f64) -> bool {
    x < 5.0 || 0.25 * x * x < nu + 1.0
}

/// J_ν(x) by backward recurrence.
fn bessel_miller(nu: f64, x: f64) -> f64 {
    let n = nu.floor() as usize;
    let f = nu - n as f64;
    let big = (n as f64).max(x);
    let mut top = (big + 30.0 + (40.0 * big).sqrt()).ceil() as usize;
    if top % 2 == 1 {
        top += 1;
    }

    // Normalization weights for the even-offset terms J_{f+2k}.
    // weight(0) = Γ(f+1) when f > 0, 1 when f = 0; weight(k) for k ≥ 1
    // = (f+2k) Γ(f+k)/k! (f > 0) or 2 (f = 0).
    let integer = f == 0.0;
    let mut g = if integer { 0.0 } else { gamma_pos(f) }; // Γ(f+k)/k! at k = 0
    let mut weights = Vec::with_capacity(top / 2 + 1);
    for k in 0..=top / 2 {
        let kf = k as f64;
        if k > 0 && !integer {
            g *= (f + kf - 1.0) / kf;
        }
        let w = if integer {
            if k == 0 {
                1.0
            } else {
                2.0
            }
        } else if k == 0 {
            gamma_pos(f + 1.0)
        } else {
            (f + 2.0 * kf) * g
        };
        weights.push(w);
    }

    let mut j_next = 0.0; // J_{f+top+1}
    let mut j_cur = 1e-300; // J_{f+top}
    let mut sum = if top % 2 == 0 { weights[top / 2] * j_cur } else { 0.0 };
    let mut at_n = if top == n { j_cur } else { 0.0 };
    for k in (1..=top).rev() {
        let mu = f + k as f64;
        let j_prev = 2.0 * mu / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev; // now J_{f+k-1}
        let idx = k - 1;
        if idx % 2 == 0 {
            sum += weights[idx / 2] * j_cur;
        }
        if idx == n {
            at_n = j_cur;
        }
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            sum *= 1e-250;
            at_n *= 1e-250;
        }
    }
    let target = if integer { 1.0 } else { (0.5 * x).powf(f) };
    at_n * target / sum
}

/// Bessel function of the first kind J_ν(x) for ν ≥ 0, x ≥ 0.
pub fn bessel_j(order: f64, x: f64) -> Result<f64> {
    if !order.is_finite() || !x.is_finite() || order < 0.0 || x < 0.0 {
        return Err(Error::Domain(format!(
            "bessel_j needs finite order >= 0 and x >= 0, got ({order}, {x})"
        )));
    }
    if x == 0.0 {
        return Ok(if order == 0.0 { 1.0 } else { 0.0 });
    }
    if use_series(order, x) {
        let lead = (order * (0.5 * x).ln()).exp();
        return Ok(lead * reduced_series(order, x));
    }
    Ok(bessel_miller(order, x))
}

/// Λ_ν(u) = J_ν(u) / u^ν, continuous at u = 0 with value 1/(2^ν Γ(ν+1)).
pub fn bessel_lambda(nu: f64, u: f64) -> f64 {
    debug_assert!(nu >= 0.0 && u >= 0.0);
    if u == 0.0 {
        return (-nu * 2f64.ln() - ln_gamma_pos(nu + 1.0)).exp();
    }
    if use_series(nu, u) {
        return 2f64.powf(-nu) * reduced_series(nu, u);
    }
    bessel_miller(nu, u) * (-nu * u.ln()).exp()
}

/// Area of the unit sphere S^{d-1} in R^d, in log form.
pub fn ln_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2f64.ln() + h * PI.ln() - ln_gamma_pos(h)
}
