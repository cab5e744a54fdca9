//! Analytic mapping families and the distortion functional `K_{p,q}`.
//!
//! For `q < p`,
//!
//! ```text
//! K_{p,q}(phi; Omega)^{pq/(p-q)} = integral over Omega of (|D phi|^p / |J|)^{q/(p-q)}
//! ```
//!
//! and for `q = p`, `K_{p,p}^p` is the essential supremum of `|D phi|^p / |J|`.
//! Both are evaluated cellwise at cell centers with closed-form derivatives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    point_serde, rasterize, CellSet, Condenser, GridDomain, Point, PointSet, Ring,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MappingSpec {
    Identity,
    /// `x -> A x + b`
    Affine {
        matrix: Vec<Vec<f64>>,
        shift: Vec<f64>,
    },
    /// `x -> c + (x - c) |x - c|^{alpha - 1}`
    RadialPower {
        alpha: f64,
        #[serde(with = "point_serde")]
        center: Point,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianData {
    /// Operator norm `|D phi(x)|`.
    pub op_norm: f64,
    /// `J(x, phi)`.
    pub jac_det: f64,
    /// Set when `jac_det = 0`.
    pub degenerate: bool,
}

type Mat3 = [[f64; 3]; 3];

fn det(m: &Mat3, n: usize) -> f64 {
    if n == 2 {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    } else {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Largest eigenvalue of a symmetric 2x2 or 3x3 matrix, in closed form.
fn largest_symmetric_eigenvalue(s: &Mat3, n: usize) -> f64 {
    if n == 2 {
        let (a, b, d) = (s[0][0], s[0][1], s[1][1]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        return mean + rad;
    }
    // trigonometric solution of the characteristic cubic
    let p1 = s[0][1].powi(2) + s[0][2].powi(2) + s[1][2].powi(2);
    let tr = s[0][0] + s[1][1] + s[2][2];
    if p1 == 0.0 {
        return s[0][0].max(s[1][1]).max(s[2][2]);
    }
    let q = tr / 3.0;
    let p2 = (s[0][0] - q).powi(2) + (s[1][1] - q).powi(2) + (s[2][2] - q).powi(2) + 2.0 * p1;
    let pp = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (s[i][j] - if i == j { q } else { 0.0 }) / pp;
        }
    }
    let r = (det(&b, 3) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    q + 2.0 * pp * phi.cos()
}

fn as_mat3(a: &[Vec<f64>]) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[i][j] = v;
        }
    }
    m
}

impl MappingSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            MappingSpec::Identity => Ok(()),
            MappingSpec::Affine { matrix, shift } => {
                let n = matrix.len();
                if !(n == 2 || n == 3) || matrix.iter().any(|r| r.len() != n) {
                    return Err("affine matrix must be 2x2 or 3x3".into());
                }
                if shift.len() != n {
                    return Err(format!("affine shift must have {n} entries"));
                }
                if matrix.iter().flatten().chain(shift).any(|v| !v.is_finite()) {
                    return Err("affine entries must be finite".into());
                }
                if det(&as_mat3(matrix), n) == 0.0 {
                    return Err("affine matrix is singular".into());
                }
                Ok(())
            }
            MappingSpec::RadialPower { alpha, .. } => {
                if !(*alpha > 0.0) || !alpha.is_finite() {
                    return Err(format!("alpha must be positive, got {alpha}"));
                }
                Ok(())
            }
        }
    }

    pub fn evaluate(&self, x: &Point) -> Result<Point> {
        match self {
            MappingSpec::Identity => Ok(*x),
            MappingSpec::Affine { matrix, shift } => {
                let n = matrix.len();
                let mut y = [0.0; 3];
                for i in 0..n {
                    y[i] = shift[i] + (0..n).map(|j| matrix[i][j] * x[j]).sum::<f64>();
                }
                Ok(y)
            }
            MappingSpec::RadialPower { alpha, center } => {
                let v = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if r == 0.0 {
                    if *alpha < 1.0 {
                        return Err(Error::Domain(
                            "radial power with alpha < 1 is undefined at its center".into(),
                        ));
                    }
                    return Ok(*center);
                }
                let s = r.powf(alpha - 1.0);
                Ok([
                    center[0] + v[0] * s,
                    center[1] + v[1] * s,
                    center[2] + v[2] * s,
                ])
            }
        }
    }

    /// Closed-form inverse.
    pub fn inverse(&self) -> Result<MappingSpec> {
        self.validate().map_err(Error::Domain)?;
        match self {
            MappingSpec::Identity => Ok(MappingSpec::Identity),
            MappingSpec::Affine { matrix, shift } => {
                let n = matrix.len();
                let m = as_mat3(matrix);
                let d = det(&m, n);
                let inv: Vec<Vec<f64>> = if n == 2 {
                    vec![
                        vec![m[1][1] / d, -m[0][1] / d],
                        vec![-m[1][0] / d, m[0][0] / d],
                    ]
                } else {
                    // adjugate: entry (i, j) is the cofactor of (j, i)
                    (0..3)
                        .map(|i| {
                            (0..3)
                                .map(|j| {
                                    let (a0, a1) = ((j + 1) % 3, (j + 2) % 3);
                                    let (b0, b1) = ((i + 1) % 3, (i + 2) % 3);
                                    (m[a0][b0] * m[a1][b1] - m[a0][b1] * m[a1][b0]) / d
                                })
                                .collect()
                        })
                        .collect()
                };
                let shift = (0..n)
                    .map(|i| -(0..n).map(|j| inv[i][j] * shift[j]).sum::<f64>())
                    .collect();
                Ok(MappingSpec::Affine { matrix: inv, shift })
            }
            MappingSpec::RadialPower { alpha, center } => Ok(MappingSpec::RadialPower {
                alpha: 1.0 / alpha,
                center: *center,
            }),
        }
    }

    pub fn jacobian(&self, x: &Point, n: usize) -> Result<JacobianData> {
        let (op_norm, jac_det) = match self {
            MappingSpec::Identity => (1.0, 1.0),
            MappingSpec::Affine { matrix, .. } => {
                if matrix.len() != n {
                    return Err(Error::Domain(format!(
                        "affine map is {}-dimensional, grid is {n}",
                        matrix.len()
                    )));
                }
                let a = as_mat3(matrix);
                let mut ata = [[0.0; 3]; 3];
                for i in 0..n {
                    for j in 0..n {
                        ata[i][j] = (0..n).map(|k| a[k][i] * a[k][j]).sum();
                    }
                }
                (
                    largest_symmetric_eigenvalue(&ata, n).max(0.0).sqrt(),
                    det(&a, n),
                )
            }
            MappingSpec::RadialPower { alpha, center } => {
                let r = super::geometry::distance(x, center);
                if r == 0.0 {
                    match alpha.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Greater) => (0.0, 0.0),
                        Some(std::cmp::Ordering::Equal) => (1.0, 1.0),
                        _ => {
                            return Err(Error::Domain(
                                "radial power with alpha < 1 is singular at its center".into(),
                            ))
                        }
                    }
                } else {
                    // radial stretch alpha r^{alpha-1}, tangential r^{alpha-1}
                    let t = r.powf(alpha - 1.0);
                    (alpha.max(1.0) * t, alpha * t.powi(n as i32))
                }
            }
        };
        Ok(JacobianData {
            op_norm,
            jac_det,
            degenerate: jac_det == 0.0,
        })
    }
}

/// Central-difference Jacobian matrix of `evaluate`.
pub fn finite_difference_jacobian(m: &MappingSpec, x: &Point, n: usize, step: f64) -> Result<Mat3> {
    let mut jac = [[0.0; 3]; 3];
    for j in 0..n {
        let mut a = *x;
        let mut b = *x;
        a[j] += step;
        b[j] -= step;
        let (ya, yb) = (m.evaluate(&a)?, m.evaluate(&b)?);
        for i in 0..n {
            jac[i][j] = (ya[i] - yb[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Largest relative discrepancy between the closed-form [`JacobianData`] and
/// finite differences of `evaluate` (operator norm by power iteration,
/// determinant by cofactors).
pub fn jacobian_self_check(m: &MappingSpec, x: &Point, n: usize) -> Result<f64> {
    let closed = m.jacobian(x, n)?;
    let scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let fd = finite_difference_jacobian(m, x, n, 1e-6 * scale)?;
    let mut v = [1.0, 0.7, 0.3];
    v[n..].iter_mut().for_each(|c| *c = 0.0);
    let mut sigma2 = 0.0;
    for _ in 0..500 {
        let mut av = [0.0; 3];
        for i in 0..n {
            av[i] = (0..n).map(|k| fd[i][k] * v[k]).sum();
        }
        let mut atav = [0.0; 3];
        for i in 0..n {
            atav[i] = (0..n).map(|k| fd[k][i] * av[k]).sum();
        }
        let norm = atav.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        sigma2 = norm / v.iter().map(|c| c * c).sum::<f64>().sqrt();
        v = atav.map(|c| c / norm);
    }
    let op = sigma2.sqrt();
    let d = det(&fd, n);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    Ok(rel(op, closed.op_norm).max(rel(d, closed.jac_det)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionMode {
    Integral,
    EssSup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionCoefficient {
    pub value: f64,
    /// `K^{pq/(p-q)}`, present when `q < p`.
    pub integrand_integral: Option<f64>,
    pub mode: DistortionMode,
    pub flagged_cells: usize,
}

pub const DEFAULT_J_MIN: f64 = 1e-12;

pub fn distortion_coefficient(
    m: &MappingSpec,
    dom: &GridDomain,
    p: f64,
    q: f64,
) -> Result<DistortionCoefficient> {
    distortion_coefficient_with(m, dom, p, q, DEFAULT_J_MIN)
}

/// [`distortion_coefficient`] with an explicit degeneracy threshold on `|J|`.
///
/// Cells with `|J| < j_min` contribute nothing when `|D phi| = 0` there;
/// otherwise they are flagged and skipped. More than 1% flagged volume is
/// an error.
pub fn distortion_coefficient_with(
    m: &MappingSpec,
    dom: &GridDomain,
    p: f64,
    q: f64,
    j_min: f64,
) -> Result<DistortionCoefficient> {
    if !(q > 1.0 && q <= p && p.is_finite()) {
        return Err(Error::Domain(format!(
            "distortion needs 1 < q <= p < inf, got p={p}, q={q}"
        )));
    }
    m.validate().map_err(Error::Domain)?;
    let n = dom.dim();
    let integral_mode = q < p;
    let power = if integral_mode { q / (p - q) } else { 1.0 / p };
    let mut flagged = 0usize;
    let mut acc = 0.0;
    for &id in dom.inside_cells() {
        let jd = match m.jacobian(&dom.center(id), n) {
            Ok(jd) => jd,
            Err(_) => {
                flagged += 1;
                continue;
            }
        };
        let term = if jd.jac_det.abs() < j_min {
            if jd.op_norm == 0.0 {
                0.0
            } else {
                flagged += 1;
                continue;
            }
        } else {
            (jd.op_norm.powf(p) / jd.jac_det.abs()).powf(power)
        };
        if integral_mode {
            acc += term;
        } else {
            acc = acc.max(term);
        }
    }
    let fraction = flagged as f64 / dom.inside_count() as f64;
    if fraction > 0.01 {
        return Err(Error::Degenerate { flagged, fraction });
    }
    Ok(if integral_mode {
        let integral = acc * dom.cell_volume();
        DistortionCoefficient {
            value: integral.powf((p - q) / (p * q)),
            integrand_integral: Some(integral),
            mode: DistortionMode::Integral,
            flagged_cells: flagged,
        }
    } else {
        DistortionCoefficient {
            value: acc,
            integrand_integral: None,
            mode: DistortionMode::EssSup,
            flagged_cells: flagged,
        }
    })
}

/// `{x : phi(x) in target}`.
#[derive(Debug, Clone)]
pub struct Preimage {
    pub map: MappingSpec,
    pub target: Arc<dyn PointSet>,
}

impl PointSet for Preimage {
    fn contains(&self, x: &Point) -> bool {
        self.map.evaluate(x).is_ok_and(|y| self.target.contains(&y))
    }
}

/// Union of the closed cells of a cell set.
#[derive(Debug, Clone)]
struct CellLookup {
    grid: Arc<GridDomain>,
    cells: CellSet,
}

impl PointSet for CellLookup {
    fn contains(&self, x: &Point) -> bool {
        self.grid
            .locate(x)
            .is_some_and(|id| self.cells.contains(id))
    }
}

/// Rasterizes `phi^{-1}(E)` and `phi^{-1}(F)` on `source`.
///
/// Plates with an analytic shape are pulled back through the shape, others
/// through the cells of the image grid.
pub fn pullback_condenser(
    m: &MappingSpec,
    image: &Condenser,
    source: Arc<GridDomain>,
) -> Result<Condenser> {
    m.validate().map_err(Error::Domain)?;
    let pull = |shape: &Option<Arc<dyn PointSet>>, cells: &CellSet| -> (Arc<dyn PointSet>, bool) {
        match shape {
            Some(s) => (
                Arc::new(Preimage {
                    map: m.clone(),
                    target: s.clone(),
                }),
                true,
            ),
            None => (
                Arc::new(Preimage {
                    map: m.clone(),
                    target: Arc::new(CellLookup {
                        grid: image.domain.clone(),
                        cells: cells.clone(),
                    }),
                }),
                false,
            ),
        }
    };
    let (e, e_analytic) = pull(&image.e_shape, &image.e);
    let (f, f_analytic) = pull(&image.f_shape, &image.f);
    let ce = rasterize(e.as_ref(), &source);
    let cf = rasterize(f.as_ref(), &source);
    let mut c = Condenser::new(ce, cf, source).map_err(|err| match err {
        Error::Geometry(msg) => Error::Geometry(format!("pulled-back condenser: {msg}")),
        other => other,
    })?;
    c.e_shape = e_analytic.then_some(e);
    c.f_shape = f_analytic.then_some(f);
    c.ring = match (m, image.ring) {
        (MappingSpec::Identity, ring) => ring,
        (MappingSpec::RadialPower { alpha, center }, Some(ring)) if *center == ring.center => {
            Some(Ring {
                center: ring.center,
                r1: ring.r1.powf(1.0 / alpha),
                r2: ring.r2.powf(1.0 / alpha),
            })
        }
        _ => None,
    };
    Ok(c)
}
