//! Exponent bookkeeping for weak (p,q)-quasiconformal mappings.
//!
//! Every check in this crate is parameterized by a dimension `n` and a pair
//! of exponents `1 < q <= p`. The boundary-extension results only apply in
//! two windows: the sub-dimensional one `n-1 < q <= p < n`, and the
//! super-dimensional one `n < q <= p < (n-1)^2/(n-2)` which is reached
//! through the duality `t -> t/(t-n+1)`.
//!
//! Comparisons are exact: the exponents are user-chosen constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension together with the exponents `p` (target) and `q` (source).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub n: usize,
    pub p: f64,
    pub q: f64,
}

impl ExponentPair {
    pub fn new(n: usize, p: f64, q: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!(
                "dimension must be at least 2, got {n}"
            )));
        }
        if !(q > 1.0) {
            return Err(Error::Domain(format!("q must exceed 1, got {q}")));
        }
        if !(q <= p) || !p.is_finite() {
            return Err(Error::Domain(format!(
                "exponents must satisfy 1 < q <= p < inf, got p={p}, q={q}"
            )));
        }
        Ok(Self { n, p, q })
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowClass {
    /// `n-1 < q <= p < n`
    SubDimensional,
    /// `p = q = n`
    Quasiconformal,
    /// `n < q <= p < (n-1)^2/(n-2)`, empty for `n = 2`
    SuperDimensional,
    OutOfWindow,
}

/// Upper end of the super-dimensional window, `(n-1)^2/(n-2)`; `None` for `n = 2`.
pub fn super_window_limit(n: usize) -> Option<f64> {
    if n <= 2 {
        return None;
    }
    let nf = n as f64;
    Some((nf - 1.0).powi(2) / (nf - 2.0))
}

pub fn classify_window(e: &ExponentPair) -> WindowClass {
    let n = e.nf();
    if n - 1.0 < e.q && e.q <= e.p && e.p < n {
        WindowClass::SubDimensional
    } else if e.p == n && e.q == n {
        WindowClass::Quasiconformal
    } else if super_window_limit(e.n).is_some_and(|limit| n < e.q && e.q <= e.p && e.p < limit) {
        WindowClass::SuperDimensional
    } else {
        WindowClass::OutOfWindow
    }
}

/// The duality `t -> t/(t-n+1)` on `(n-1, inf)`.
pub fn dual_exponent(n: usize, t: f64) -> Result<f64> {
    let shift = n as f64 - 1.0;
    if !(t > shift) {
        return Err(Error::Domain(format!(
            "dual exponent needs t > n-1 = {shift}, got {t}"
        )));
    }
    Ok(t / (t - shift))
}

/// Inverse of [`dual_exponent`]: the `t` whose dual is `s`, i.e. `s(n-1)/(s-1)`.
///
/// Coincides with [`dual_exponent`] only for `n = 2`.
pub fn undual_exponent(n: usize, s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::Domain(format!(
            "inverse duality needs s > 1, got {s}"
        )));
    }
    Ok(s * (n as f64 - 1.0) / (s - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualExponents {
    pub p: f64,
    pub q: f64,
    /// `p' > n-1`; false marks the endpoint `p = (n-1)^2/(n-2)` and beyond.
    pub above_threshold: bool,
}

pub fn dual_exponents(e: &ExponentPair) -> Result<DualExponents> {
    let p = dual_exponent(e.n, e.p)?;
    let q = dual_exponent(e.n, e.q)?;
    Ok(DualExponents {
        p,
        q,
        above_threshold: p > e.nf() - 1.0,
    })
}

/// Hypothesis of the composition duality. The broad reading is
/// `n-1 < q <= p`; the strict one is `n < q <= p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualityWindow {
    Broad,
    Strict,
}

pub fn in_duality_window(e: &ExponentPair, window: DualityWindow) -> bool {
    let lower = match window {
        DualityWindow::Broad => e.nf() - 1.0,
        DualityWindow::Strict => e.nf(),
    };
    lower < e.q && e.q <= e.p
}
