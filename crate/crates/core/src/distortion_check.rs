//! Numerical checks of the capacitary distortion inequality
//!
//! ```text
//! cap_q(phi^{-1}(E), phi^{-1}(F); Omega)^{1/q} <= K_{p,q}(phi; Omega) cap_p(E, F; Omega~)^{1/p}
//! ```
//!
//! and of its dual for the inverse mapping. Both sides carry discretization
//! error, so a check passes when the slack is above `-tau (lhs + rhs)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::capacity::{solve_capacity, SolverOptions};
use crate::error::{Error, Result};
use crate::exponents::{classify_window, dual_exponents, ExponentPair, WindowClass};
use crate::geometry::{Condenser, GridDomain};
use crate::mappings::{distortion_coefficient, pullback_condenser, MappingSpec};

/// Default relative discretization budget.
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    /// Capacity side being bounded, `cap^{1/q}`.
    pub lhs: f64,
    pub rhs_k: f64,
    /// Capacity factor on the bounding side, `cap^{1/p}`.
    pub rhs_cap: f64,
    /// `rhs_k * rhs_cap - lhs`.
    pub slack: f64,
    pub pass: bool,
    pub discretization_budget: f64,
    /// Exponents actually used for the (lhs, rhs) capacities.
    pub lhs_exponent: f64,
    pub rhs_exponent: f64,
    /// Both capacity solves met their stopping rule.
    pub converged: bool,
}

impl DistortionReport {
    fn assemble(
        lhs: f64,
        rhs_k: f64,
        rhs_cap: f64,
        tau: f64,
        exps: (f64, f64),
        converged: bool,
    ) -> Self {
        let rhs = rhs_k * rhs_cap;
        let slack = rhs - lhs;
        let budget = tau * (lhs + rhs);
        DistortionReport {
            lhs,
            rhs_k,
            rhs_cap,
            slack,
            pass: slack >= -budget,
            discretization_budget: budget,
            lhs_exponent: exps.0,
            rhs_exponent: exps.1,
            converged,
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!(
            "tau must be a finite nonnegative number, got {tau}"
        )));
    }
    Ok(())
}

/// Compares `cap_q^{1/q}` of the pulled-back condenser on `source` against
/// `K_{p,q}(m; source) * cap_p^{1/p}` of `image` (on its own grid).
pub fn verify_capacity_inequality(
    m: &MappingSpec,
    image: &Condenser,
    p: f64,
    q: f64,
    source: Arc<GridDomain>,
    opts: &SolverOptions,
    tau: f64,
) -> Result<DistortionReport> {
    ExponentPair::new(source.dim(), p, q)?;
    check_tau(tau)?;
    if source.dim() != image.domain.dim() {
        return Err(Error::Geometry(
            "source and image grids differ in dimension".into(),
        ));
    }
    let k = distortion_coefficient(m, &source, p, q)?;
    let pulled = pullback_condenser(m, image, source)?;
    let left = solve_capacity(&pulled, q, opts)?;
    let right = solve_capacity(image, p, opts)?;
    Ok(DistortionReport::assemble(
        left.value.powf(1.0 / q),
        k.value,
        right.value.powf(1.0 / p),
        tau,
        (q, p),
        left.converged && right.converged,
    ))
}

/// The dual inequality for `n < q <= p < (n-1)^2/(n-2)`:
///
/// ```text
/// cap_{p'}(phi(F0), phi(F1); Omega~)^{1/p'} <= K_{q',p'}(phi^{-1}; Omega~) cap_{q'}(F0, F1; Omega)^{1/q'}
/// ```
///
/// `source` is a condenser in `Omega`; it is pushed forward to `image`.
pub fn verify_dual_inequality(
    m: &MappingSpec,
    source: &Condenser,
    p: f64,
    q: f64,
    image: Arc<GridDomain>,
    opts: &SolverOptions,
    tau: f64,
) -> Result<DistortionReport> {
    let n = source.domain.dim();
    let pair = ExponentPair::new(n, p, q)?;
    if classify_window(&pair) != WindowClass::SuperDimensional {
        return Err(Error::Window(format!(
            "dual check needs n < q <= p < (n-1)^2/(n-2); got n={n}, p={p}, q={q}"
        )));
    }
    check_tau(tau)?;
    if image.dim() != n {
        return Err(Error::Geometry(
            "source and image grids differ in dimension".into(),
        ));
    }
    let d = dual_exponents(&pair)?;
    let inverse = m.inverse()?;
    // push forward = pull back through the inverse
    let pushed = pullback_condenser(&inverse, source, image.clone())?;
    let k = distortion_coefficient(&inverse, &image, d.q, d.p)?;
    let left = solve_capacity(&pushed, d.p, opts)?;
    let right = solve_capacity(source, d.q, opts)?;
    Ok(DistortionReport::assemble(
        left.value.powf(1.0 / d.p),
        k.value,
        right.value.powf(1.0 / d.q),
        tau,
        (d.p, d.q),
        left.converged && right.converged,
    ))
}
