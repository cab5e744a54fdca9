//! Discrete p-modulus of finite curve families.
//!
//! A density `rho >= 0` lives on the inside cells. A curve is discretized
//! into pieces of length at most `h/2`, and each piece reads `rho` at the
//! cell holding its midpoint. The program
//!
//! ```text
//! minimize   sum_c rho_c^p h^n
//! subject to sum_{pieces of gamma} rho(piece) |piece| >= 1   for every curve gamma
//! ```
//!
//! is solved through its concave dual (one multiplier per curve) by exact
//! coordinate ascent. The returned density is rescaled to be admissible, so
//! `value` is an upper bound and `lower_bound` a lower bound for the
//! program's optimum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::capacity::{ring_capacity_exact, solve_capacity, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{distance, Condenser, GridDomain, Point, Ring};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    points: Vec<Point>,
    lengths: Vec<f64>,
}

impl Curve {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Geometry("a curve needs at least two points".into()));
        }
        let lengths: Vec<f64> = points.windows(2).map(|w| distance(&w[0], &w[1])).collect();
        let total: f64 = lengths.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Geometry(
                "a curve needs positive finite length".into(),
            ));
        }
        Ok(Curve { points, lengths })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn segment_lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self) -> f64 {
        self.lengths.iter().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    pub curves: Vec<Curve>,
}

impl CurveFamily {
    pub fn new(curves: Vec<Curve>) -> Self {
        CurveFamily { curves }
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }
}

/// Nonnegative density, one value per inside cell (in field order).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulusOptions {
    pub max_sweeps: usize,
    /// Stop once `(value - lower_bound) / value` drops below this.
    pub gap_tol: f64,
}

impl Default for ModulusOptions {
    fn default() -> Self {
        ModulusOptions {
            max_sweeps: 20_000,
            gap_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusResult {
    /// Objective of the admissible (rescaled) density.
    pub value: f64,
    /// Dual objective; the optimum lies in `[lower_bound, value]`.
    pub lower_bound: f64,
    pub admissible_ok: bool,
    /// Smallest line integral before the final rescaling.
    pub min_constraint_before_repair: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub density: DensityField,
}

/// `count` radial segments from the inner to the outer sphere of `ring`,
/// sampled every `h/2` at most. Directions are equispaced angles in the
/// plane and a Fibonacci spiral in space.
pub fn sample_radial_curves(ring: &Ring, count: usize, grid: &GridDomain) -> Result<CurveFamily> {
    if count == 0 {
        return Err(Error::Domain("curve count must be at least 1".into()));
    }
    if !(0.0 < ring.r1 && ring.r1 < ring.r2 && ring.r2.is_finite()) {
        return Err(Error::Domain(format!(
            "ring needs 0 < r1 < r2, got r1={}, r2={}",
            ring.r1, ring.r2
        )));
    }
    let n = grid.dim();
    for axis in 0..n {
        for sign in [-1.0, 1.0] {
            let mut x = ring.center;
            x[axis] += sign * ring.r2;
            if !grid.box_contains(&x) {
                return Err(Error::Geometry("ring leaves the grid".into()));
            }
        }
    }
    let pieces = ((ring.r2 - ring.r1) / (0.5 * grid.h())).ceil().max(1.0) as usize;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let curves = (0..count)
        .map(|k| {
            let dir = if n == 2 {
                let t = std::f64::consts::TAU * k as f64 / count as f64;
                [t.cos(), t.sin(), 0.0]
            } else {
                let z = 1.0 - (2 * k + 1) as f64 / count as f64;
                let s = (1.0 - z * z).max(0.0).sqrt();
                let t = golden * k as f64;
                [s * t.cos(), s * t.sin(), z]
            };
            let points = (0..=pieces)
                .map(|i| {
                    let r = ring.r1 + (ring.r2 - ring.r1) * i as f64 / pieces as f64;
                    let mut x = ring.center;
                    for a in 0..3 {
                        x[a] += r * dir[a];
                    }
                    x
                })
                .collect();
            Curve::new(points)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveFamily { curves })
}

/// Sparse constraint rows: `(field index, total length read from that cell)`.
fn constraint_rows(fam: &CurveFamily, grid: &GridDomain) -> Result<Vec<Vec<(usize, f64)>>> {
    let max_piece = 0.5 * grid.h();
    fam.curves
        .iter()
        .enumerate()
        .map(|(ci, curve)| {
            let mut row = BTreeMap::new();
            for (w, &len) in curve.points.windows(2).zip(&curve.lengths) {
                if len == 0.0 {
                    continue;
                }
                let pieces = (len / max_piece).ceil().max(1.0) as usize;
                let piece = len / pieces as f64;
                for k in 0..pieces {
                    let t = (k as f64 + 0.5) / pieces as f64;
                    let mid = [0, 1, 2].map(|a| w[0][a] + t * (w[1][a] - w[0][a]));
                    let field = grid
                        .locate(&mid)
                        .and_then(|id| grid.field_index(id))
                        .ok_or_else(|| Error::Geometry(format!("curve {ci} leaves the domain")))?;
                    *row.entry(field).or_insert(0.0) += piece;
                }
            }
            Ok(row.into_iter().collect())
        })
        .collect()
}

struct Dual {
    rows: Vec<Vec<(usize, f64)>>,
    p: f64,
    vol: f64,
    lambda: Vec<f64>,
    /// `A^T lambda`
    load: Vec<f64>,
}

impl Dual {
    fn density(&self, load: f64) -> f64 {
        if load <= 0.0 {
            0.0
        } else {
            (load / (self.p * self.vol)).powf(1.0 / (self.p - 1.0))
        }
    }

    /// Line integral of the induced density along `row` when its multiplier is `t`.
    fn integral(&self, row: &[(usize, f64)], old: f64, t: f64) -> (f64, f64) {
        let k = 1.0 / (self.p - 1.0);
        let scale = self.p * self.vol;
        let (mut g, mut dg) = (0.0, 0.0);
        for &(c, a) in row {
            let s = (self.load[c] + a * (t - old)).max(0.0) / scale;
            if s > 0.0 {
                let r = s.powf(k);
                g += a * r;
                dg += a * a * k * r / (s * scale);
            }
        }
        (g, dg)
    }

    /// Maximizes the dual along one coordinate.
    fn update(&mut self, j: usize) {
        let row = std::mem::take(&mut self.rows[j]);
        let old = self.lambda[j];
        let t = if self.integral(&row, old, 0.0).0 >= 1.0 {
            0.0
        } else {
            let mut hi = old.max(f64::MIN_POSITIVE * 1e10);
            while self.integral(&row, old, hi).0 < 1.0 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            let mut t = hi;
            for _ in 0..100 {
                let (g, dg) = self.integral(&row, old, t);
                if g < 1.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                if (g - 1.0).abs() <= 1e-15 || hi - lo <= 1e-16 * hi {
                    break;
                }
                let newton = t - (g - 1.0) / dg;
                t = if dg > 0.0 && newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
            }
            t
        };
        for &(c, a) in &row {
            self.load[c] = (self.load[c] + a * (t - old)).max(0.0);
        }
        self.lambda[j] = t;
        self.rows[j] = row;
    }

    fn rho(&self) -> Vec<f64> {
        self.load.iter().map(|&l| self.density(l)).collect()
    }

    fn objective(&self, rho: &[f64]) -> f64 {
        rho.iter().map(|r| r.powf(self.p)).sum::<f64>() * self.vol
    }

    fn line_integrals(&self, rho: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, a)| a * rho[c]).sum())
            .collect()
    }
}

pub fn modulus_lower_bound(fam: &CurveFamily, p: f64, grid: &GridDomain) -> Result<ModulusResult> {
    modulus_lower_bound_with(fam, p, grid, &ModulusOptions::default())
}

/// [`modulus_lower_bound`] with explicit stopping rules.
pub fn modulus_lower_bound_with(
    fam: &CurveFamily,
    p: f64,
    grid: &GridDomain,
    opts: &ModulusOptions,
) -> Result<ModulusResult> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    let cells = grid.inside_count();
    if fam.is_empty() {
        return Ok(ModulusResult {
            value: 0.0,
            lower_bound: 0.0,
            admissible_ok: true,
            min_constraint_before_repair: f64::INFINITY,
            iterations: 0,
            converged: true,
            density: DensityField {
                values: vec![0.0; cells],
            },
        });
    }
    let rows = constraint_rows(fam, grid)?;
    let mut dual = Dual {
        lambda: vec![0.0; rows.len()],
        load: vec![0.0; cells],
        rows,
        p,
        vol: grid.cell_volume(),
    };

    let mut sweeps = 0;
    let mut converged = false;
    let (mut rho, mut value, mut lower, mut min_before) = (Vec::new(), f64::INFINITY, 0.0, 0.0);
    while sweeps < opts.max_sweeps {
        for j in 0..dual.rows.len() {
            dual.update(j);
        }
        sweeps += 1;
        if sweeps % 5 != 0 && sweeps != 1 {
            continue;
        }
        let r = dual.rho();
        let obj = dual.objective(&r);
        let m = dual
            .line_integrals(&r)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let d = dual.lambda.iter().sum::<f64>() - (p - 1.0) * obj;
        let repaired = obj / m.powf(p);
        lower = f64::max(lower, d);
        if repaired < value {
            value = repaired;
            rho = r;
            min_before = m;
        }
        if value - lower <= opts.gap_tol * value {
            converged = true;
            break;
        }
    }
    if rho.is_empty() {
        rho = dual.rho();
        min_before = dual
            .line_integrals(&rho)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        value = dual.objective(&rho) / min_before.powf(p);
    }

    // rescale so every constraint holds, with a few ulps to spare
    let scale = (1.0 + 4.0 * f64::EPSILON) / min_before;
    for r in &mut rho {
        *r *= scale;
    }
    let admissible_ok = dual.line_integrals(&rho).iter().all(|&v| v >= 1.0);
    Ok(ModulusResult {
        value: dual.objective(&rho),
        lower_bound: lower.min(value),
        admissible_ok,
        min_constraint_before_repair: min_before,
        iterations: sweeps,
        converged,
        density: DensityField { values: rho },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HesseShlykReport {
    pub modulus: f64,
    pub modulus_lower_bound: f64,
    /// Numeric capacity on the same grid.
    pub capacity: f64,
    pub capacity_exact: f64,
    /// `modulus / capacity`
    pub ratio: f64,
    pub ratio_to_exact: f64,
    pub curve_count: usize,
    pub admissible_ok: bool,
    pub converged: bool,
}

/// Compares the modulus of `curve_count` radial curves with the capacity of
/// a ring condenser.
pub fn check_hesse_shlyk(
    c: &Condenser,
    p: f64,
    curve_count: usize,
    opts: &SolverOptions,
) -> Result<HesseShlykReport> {
    let ring = c
        .ring
        .ok_or_else(|| Error::Geometry("modulus check needs a ring condenser".into()))?;
    let fam = sample_radial_curves(&ring, curve_count, &c.domain)?;
    let m = modulus_lower_bound(&fam, p, &c.domain)?;
    let cap = solve_capacity(c, p, opts)?;
    let exact = ring_capacity_exact(c.domain.dim(), p, ring.r1, ring.r2)?;
    Ok(HesseShlykReport {
        modulus: m.value,
        modulus_lower_bound: m.lower_bound,
        capacity: cap.value,
        capacity_exact: exact,
        ratio: m.value / cap.value,
        ratio_to_exact: m.value / exact,
        curve_count,
        admissible_ok: m.admissible_ok,
        converged: m.converged && cap.converged,
    })
}
