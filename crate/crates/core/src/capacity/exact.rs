use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Surface measure of the unit sphere in `R^n`, for `n = 2, 3`.
pub fn unit_sphere_area(n: usize) -> Result<f64> {
    match n {
        2 => Ok(2.0 * PI),
        3 => Ok(4.0 * PI),
        _ => Err(Error::Domain(format!(
            "sphere area is provided for n = 2, 3 only, got {n}"
        ))),
    }
}

/// p-capacity of the spherical ring `r1 < |x - x0| < r2` in `R^n`.
///
/// Logarithmic for `p = n`:
///
/// ```text
/// omega_{n-1} / log^{n-1}(r2/r1)
/// ```
///
/// and for `p != n`, with `e = (p-n)/(p-1)`:
///
/// ```text
/// ((n-p)/(p-1))^{p-1} * omega_{n-1} / (r1^e - r2^e)^{p-1}
/// ```
///
/// The ratio `(n-p) / (r1^e - r2^e)` is positive on both sides of `p = n`.
pub fn ring_capacity_exact(n: usize, p: f64, r1: f64, r2: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    if !(r1 > 0.0) || !(r1 < r2) || !r2.is_finite() {
        return Err(Error::Domain(format!(
            "ring needs 0 < r1 < r2, got r1={r1}, r2={r2}"
        )));
    }
    let omega = unit_sphere_area(n)?;
    let nf = n as f64;
    let log_ratio = (r2 / r1).ln();
    if p == nf {
        return Ok(omega / log_ratio.powi(n as i32 - 1));
    }
    let e = (p - nf) / (p - 1.0);
    // r1^e - r2^e = r2^e * expm1(e * ln(r1/r2)), accurate when e is small
    let diff = r2.powf(e) * (-e * log_ratio).exp_m1();
    let ratio = (nf - p) / ((p - 1.0) * diff);
    Ok(omega * ratio.powf(p - 1.0))
}

/// Lower bound `min(diam E, diam F) / (C R^{1+p-n})` for continua in a
/// domain inside `B(0, R)`, valid for `n-1 < p <= n` with an unspecified
/// constant `C`. Diagnostic only.
pub fn accessibility_lower_bound(
    diam_e: f64,
    diam_f: f64,
    r: f64,
    p: f64,
    n: usize,
    c: f64,
) -> Result<f64> {
    for (name, v) in [
        ("diam E", diam_e),
        ("diam F", diam_f),
        ("R", r),
        ("p", p),
        ("C", c),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    let nf = n as f64;
    if n < 2 || !(p > nf - 1.0 && p <= nf) {
        return Err(Error::Domain(format!(
            "bound needs n-1 < p <= n, got n={n}, p={p}"
        )));
    }
    Ok(diam_e.min(diam_f) / (c * r.powf(1.0 + p - nf)))
}
