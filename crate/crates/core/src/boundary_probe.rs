//! Sampled evidence for boundary behaviour: capacity lower bounds against
//! continua crossing a shell at a boundary point, and cluster sets of an
//! inverse mapping at boundary points of the image.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{accessibility_lower_bound, solve_capacity, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{
    diameter, distance, rasterize, CellSet, Condenser, GridDomain, Point, RegionSpec,
};
use crate::mappings::MappingSpec;

/// A boundary point `x0` with neighbourhoods `V ⊂ U`, a fixed plate `E` and
/// the continua to test against it.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessibilityProbe {
    pub x0: Point,
    pub u: RegionSpec,
    pub v: RegionSpec,
    pub e: CellSet,
    pub p: f64,
    pub continua: Vec<CellSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumRecord {
    pub capacity: f64,
    pub diameter: f64,
    pub cells: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibilityReport {
    /// Smallest capacity over the sampled continua.
    pub delta_hat: f64,
    pub per_continuum: Vec<ContinuumRecord>,
    pub diam_e: f64,
    pub min_diam_f: f64,
    /// Radius of an origin-centred ball holding the domain.
    pub enclosing_radius: f64,
    pub constant: f64,
    /// The diameter bound `min(diam E, diam F) / (C R^{1+p-n})`; only
    /// defined for `n-1 < p <= n`, and only a diagnostic since `C` is unknown.
    pub lower_bound: Option<f64>,
    pub converged: bool,
}

fn enclosing_radius(grid: &GridDomain) -> f64 {
    let half_diag = 0.5 * grid.h() * (grid.dim() as f64).sqrt();
    grid.inside_cells()
        .iter()
        .map(|&id| distance(&grid.center(id), &[0.0; 3]))
        .fold(0.0, f64::max)
        + half_diag
}

/// Checks the probe geometry and returns the rasterized `(U, V)`.
fn check_probe(probe: &AccessibilityProbe, grid: &GridDomain) -> Result<(CellSet, CellSet)> {
    probe.u.validate().map_err(Error::Domain)?;
    probe.v.validate().map_err(Error::Domain)?;
    let u = rasterize(&probe.u, grid);
    let v = rasterize(&probe.v, grid);
    if !v.is_subset(&u) {
        return Err(Error::Geometry("V must lie inside U".into()));
    }
    if u.len() == v.len() {
        return Err(Error::Geometry(
            "the shell between V and U holds no cells".into(),
        ));
    }
    Ok((u, v))
}

/// Whether a continuum crosses the shell: it meets `V` and leaves `U`.
fn crosses(f: &CellSet, u: &CellSet, v: &CellSet) -> bool {
    f.intersects(v) && f.as_slice().iter().any(|&id| !u.contains(id))
}

/// `delta_hat = min_F cap_p(E, F)` over the sampled continua, next to the
/// diameter bound with constant `c`.
pub fn probe_strong_accessibility(
    probe: &AccessibilityProbe,
    grid: Arc<GridDomain>,
    opts: &SolverOptions,
    c: f64,
) -> Result<AccessibilityReport> {
    if probe.continua.is_empty() {
        return Err(Error::Domain("at least one continuum is required".into()));
    }
    let (u, v) = check_probe(probe, &grid)?;
    for (i, f) in probe.continua.iter().enumerate() {
        if !grid.is_connected(f) {
            return Err(Error::Geometry(format!("continuum {i} is not connected")));
        }
        if !crosses(f, &u, &v) {
            return Err(Error::Geometry(format!(
                "continuum {i} does not cross from V to the outside of U"
            )));
        }
    }
    let diam_e = diameter(&probe.e, &grid)?;
    let mut records = Vec::with_capacity(probe.continua.len());
    for f in &probe.continua {
        let cond = Condenser::new(probe.e.clone(), f.clone(), grid.clone())?;
        let res = solve_capacity(&cond, probe.p, opts)?;
        records.push(ContinuumRecord {
            capacity: res.value,
            diameter: diameter(f, &grid)?,
            cells: f.len(),
            converged: res.converged,
        });
    }
    let delta_hat = records
        .iter()
        .map(|r| r.capacity)
        .fold(f64::INFINITY, f64::min);
    let min_diam_f = records
        .iter()
        .map(|r| r.diameter)
        .fold(f64::INFINITY, f64::min);
    let radius = enclosing_radius(&grid);
    let n = grid.dim();
    let in_range = probe.p > n as f64 - 1.0 && probe.p <= n as f64;
    let lower_bound = if in_range && min_diam_f > 0.0 {
        Some(accessibility_lower_bound(
            diam_e, min_diam_f, radius, probe.p, n, c,
        )?)
    } else {
        None
    };
    Ok(AccessibilityReport {
        delta_hat,
        converged: records.iter().all(|r| r.converged),
        per_continuum: records,
        diam_e,
        min_diam_f,
        enclosing_radius: radius,
        constant: c,
        lower_bound,
    })
}

fn segment_distance(x: &Point, a: &Point, b: &Point) -> f64 {
    let mut ab = [0.0; 3];
    let mut ax = [0.0; 3];
    for k in 0..3 {
        ab[k] = b[k] - a[k];
        ax[k] = x[k] - a[k];
    }
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 {
        (ax.iter().zip(&ab).map(|(p, q)| p * q).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let foot = [0, 1, 2].map(|k| a[k] + t * ab[k]);
    distance(x, &foot)
}

/// Inside cells whose centers lie within one cell width of the polyline.
pub fn polyline_tube(points: &[Point], grid: &GridDomain) -> CellSet {
    let radius = grid.h() * (1.0 + 1e-9);
    let ids = grid
        .inside_cells()
        .iter()
        .copied()
        .filter(|&id| {
            let x = grid.center(id);
            points
                .windows(2)
                .any(|w| segment_distance(&x, &w[0], &w[1]) <= radius)
        })
        .collect();
    CellSet::from_sorted(ids)
}

/// Samples `count` continua as tubes around two-segment polylines that run
/// from a cell of `V` to a cell outside `U`, avoiding `avoid`.
pub fn sample_shell_continua(
    u: &RegionSpec,
    v: &RegionSpec,
    avoid: &CellSet,
    count: usize,
    seed: u64,
    grid: &GridDomain,
) -> Result<Vec<CellSet>> {
    let uc = rasterize(u, grid);
    let vc = rasterize(v, grid);
    let starts: Vec<usize> = vc
        .as_slice()
        .iter()
        .copied()
        .filter(|&id| !avoid.contains(id))
        .collect();
    let ends: Vec<usize> = grid
        .inside_cells()
        .iter()
        .copied()
        .filter(|&id| !uc.contains(id) && !avoid.contains(id))
        .collect();
    if starts.is_empty() || ends.is_empty() {
        return Err(Error::Geometry(
            "no room to place a continuum across the shell".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 200 * count.max(1) {
            return Err(Error::Geometry(format!(
                "found only {} of {count} admissible continua",
                out.len()
            )));
        }
        let a = grid.center(starts[rng.gen_range(0..starts.len())]);
        let b = grid.center(ends[rng.gen_range(0..ends.len())]);
        let len = distance(&a, &b);
        let mut mid = [0.0; 3];
        for k in 0..grid.dim() {
            mid[k] = 0.5 * (a[k] + b[k]) + rng.gen_range(-0.25..0.25) * len;
        }
        let tube = polyline_tube(&[a, mid, b], grid);
        if tube.intersects(avoid) || !grid.is_connected(&tube) || !crosses(&tube, &uc, &vc) {
            continue;
        }
        out.push(tube);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSetEstimate {
    #[serde(with = "point_list")]
    pub points: Vec<Point>,
    pub diameter: f64,
}

mod point_list {
    use super::Point;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Point], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for p in v {
            seq.serialize_element(&p[..])?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Point>, D::Error> {
        let raw = Vec::<Vec<f64>>::deserialize(d)?;
        raw.iter()
            .map(|v| crate::geometry::point_serde::from_slice(v).map_err(serde::de::Error::custom))
            .collect()
    }
}

fn inside_at(grid: &GridDomain, x: &Point) -> bool {
    grid.locate(x).is_some_and(|id| grid.is_inside(id))
}

/// Unit vector from `b` toward the inside cells near it.
fn inward_normal(grid: &GridDomain, b: &Point) -> Result<Point> {
    let h = grid.h();
    let n = grid.dim();
    let mut nv = [0.0; 3];
    let mut inside = 0;
    let mut outside = 0;
    let span = |a: usize| if a < n { -2i32..=2 } else { 0..=0 };
    let offsets = span(0).flat_map(|i| span(1).flat_map(move |j| span(2).map(move |k| [i, j, k])));
    for o in offsets {
        let x = [0, 1, 2].map(|a| b[a] + o[a] as f64 * h);
        if inside_at(grid, &x) {
            inside += 1;
            for a in 0..3 {
                nv[a] += x[a] - b[a];
            }
        } else {
            outside += 1;
        }
    }
    if outside == 0 {
        return Err(Error::Domain(format!(
            "{b:?} is an interior point of the domain"
        )));
    }
    if inside == 0 {
        return Err(Error::Domain(format!(
            "{b:?} is not on the domain boundary"
        )));
    }
    let norm = distance(&nv, &[0.0; 3]);
    if norm == 0.0 {
        return Err(Error::Geometry(format!("no inward direction at {b:?}")));
    }
    Ok(nv.map(|c| c / norm))
}

/// Any unit vector orthogonal to `d`, then the third axis of a frame in space.
fn tangent_frame(d: &Point, n: usize) -> (Point, Point) {
    if n == 2 {
        return ([-d[1], d[0], 0.0], [0.0; 3]);
    }
    let helper = if d[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let cross = |a: &Point, b: &Point| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let t1 = cross(d, &helper);
    let len = distance(&t1, &[0.0; 3]);
    let t1 = t1.map(|c| c / len);
    (t1, cross(d, &t1))
}

/// Estimates the cluster set of `m_inverse` at the boundary point `b` of the
/// image domain `grid`.
///
/// Builds `sequences` approach sequences `x_k -> b` with `|x_k - b| = 2^{-k}`,
/// half radial and half swinging tangentially, maps the deepest terms
/// through `m_inverse` and merges images closer than `2h`.
pub fn estimate_cluster_set(
    m_inverse: &MappingSpec,
    b: &Point,
    sequences: usize,
    depth: usize,
    grid: &GridDomain,
) -> Result<ClusterSetEstimate> {
    if sequences == 0 || depth == 0 {
        return Err(Error::Domain("sequences and depth must be positive".into()));
    }
    m_inverse.validate().map_err(Error::Domain)?;
    let n = grid.dim();
    let h = grid.h();
    let normal = inward_normal(grid, b)?;
    let (t1, t2) = tangent_frame(&normal, n);
    let max_angle = 1.2;
    let mut tails = Vec::with_capacity(sequences);
    for j in 0..sequences {
        let spread = if sequences == 1 {
            0.0
        } else {
            2.0 * j as f64 / (sequences - 1) as f64 - 1.0
        };
        let phase = std::f64::consts::TAU * j as f64 / sequences as f64;
        let mut last = None;
        for k in 1..=depth {
            let r = 0.5f64.powi(k as i32);
            let mut angle = if j % 2 == 0 {
                spread * max_angle
            } else {
                max_angle * (phase + k as f64).sin()
            };
            let twist = phase + 0.7 * k as f64;
            let x = loop {
                let tangent = if n == 2 {
                    t1
                } else {
                    [0, 1, 2].map(|a| t1[a] * twist.cos() + t2[a] * twist.sin())
                };
                let dir = [0, 1, 2].map(|a| normal[a] * angle.cos() + tangent[a] * angle.sin());
                let x = [0, 1, 2].map(|a| b[a] + r * dir[a]);
                // terms below cell size cannot be checked against the grid
                if r < h || inside_at(grid, &x) {
                    break Some(x);
                }
                if angle.abs() < 1e-6 {
                    break None;
                }
                angle *= 0.5;
            };
            if let Some(x) = x {
                last = Some(x);
            }
        }
        if let Some(x) = last {
            tails.push(m_inverse.evaluate(&x)?);
        }
    }
    if tails.is_empty() {
        return Err(Error::Geometry(
            "no approach sequence stays inside the domain".into(),
        ));
    }
    // greedy merge at radius 2h, clusters represented by their centroids
    let mut clusters: Vec<(Point, Point, usize)> = Vec::new();
    for y in tails {
        match clusters
            .iter_mut()
            .find(|(first, _, _)| distance(first, &y) <= 2.0 * h)
        {
            Some((_, sum, count)) => {
                for a in 0..3 {
                    sum[a] += y[a];
                }
                *count += 1;
            }
            None => clusters.push((y, y, 1)),
        }
    }
    let points: Vec<Point> = clusters
        .into_iter()
        .map(|(_, sum, c)| sum.map(|s| s / c as f64))
        .collect();
    let mut diam = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for bpt in &points[i + 1..] {
            diam = diam.max(distance(a, bpt));
        }
    }
    Ok(ClusterSetEstimate {
        points,
        diameter: diam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_grid(cells: usize) -> Arc<GridDomain> {
        let g = GridDomain::cube(2, -1.1, 1.1, cells).unwrap();
        Arc::new(g.masked(&RegionSpec::ball([0.0; 3], 1.0)).unwrap())
    }

    fn disk_probe(g: &GridDomain, count: usize, seed: u64) -> AccessibilityProbe {
        let x0 = [1.0, 0.0, 0.0];
        let u = RegionSpec::ball(x0, 0.5);
        let v = RegionSpec::ball(x0, 0.25);
        let e = rasterize(&RegionSpec::closed_ball([-0.5, 0.0, 0.0], 0.2), g);
        let continua = sample_shell_continua(&u, &v, &e, count, seed, g).unwrap();
        AccessibilityProbe {
            x0,
            u,
            v,
            e,
            p: 2.0,
            continua,
        }
    }

    fn annulus_grid(half: f64, r1: f64, r2: f64, cells: usize) -> GridDomain {
        let g = GridDomain::cube(2, -half, half, cells).unwrap();
        g.masked(&RegionSpec::annulus([0.0; 3], r1, r2)).unwrap()
    }

    #[test]
    fn tubes_are_connected() {
        let g = GridDomain::cube(3, -1.0, 1.0, 16).unwrap();
        let t = polyline_tube(
            &[[-0.9, -0.8, -0.7], [0.1, 0.3, -0.2], [0.8, 0.85, 0.9]],
            &g,
        );
        assert!(g.is_connected(&t));
        let g2 = GridDomain::cube(2, -1.0, 1.0, 40).unwrap();
        let t2 = polyline_tube(&[[-0.9, -0.33, 0.0], [0.77, 0.5, 0.0]], &g2);
        assert!(g2.is_connected(&t2) && t2.len() > 40);
    }

    #[test]
    fn disk_probe_is_positive() {
        let g = disk_grid(48);
        let probe = disk_probe(&g, 8, 11);
        assert_eq!(probe.continua.len(), 8);
        let r =
            probe_strong_accessibility(&probe, g.clone(), &SolverOptions::default(), 1.0).unwrap();
        assert!(r.delta_hat > 0.0);
        assert!(r.lower_bound.is_some());
        assert!(r
            .per_continuum
            .iter()
            .all(|c| c.capacity >= r.delta_hat && c.converged));
    }

    #[test]
    fn more_continua_never_raise_the_minimum() {
        let g = disk_grid(32);
        let small = disk_probe(&g, 3, 5);
        let mut big = small.clone();
        big.continua.extend(disk_probe(&g, 3, 6).continua);
        let opts = SolverOptions::default();
        let a = probe_strong_accessibility(&small, g.clone(), &opts, 1.0).unwrap();
        let b = probe_strong_accessibility(&big, g, &opts, 1.0).unwrap();
        assert!(b.delta_hat <= a.delta_hat);
    }

    #[test]
    fn sampling_is_seeded() {
        let g = disk_grid(32);
        assert_eq!(disk_probe(&g, 4, 9).continua, disk_probe(&g, 4, 9).continua);
    }

    #[test]
    fn empty_shell_is_rejected() {
        let g = disk_grid(32);
        let mut probe = disk_probe(&g, 2, 1);
        probe.v = probe.u.clone();
        let r = probe_strong_accessibility(&probe, g, &SolverOptions::default(), 1.0);
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn continuum_must_cross() {
        let g = disk_grid(32);
        let mut probe = disk_probe(&g, 1, 1);
        // a short tube inside the shell only
        probe.continua = vec![polyline_tube(&[[0.62, 0.0, 0.0], [0.68, 0.0, 0.0]], &g)];
        let r = probe_strong_accessibility(&probe, g.clone(), &SolverOptions::default(), 1.0);
        assert!(matches!(r, Err(Error::Geometry(_))));
        probe.continua.clear();
        assert!(matches!(
            probe_strong_accessibility(&probe, g, &SolverOptions::default(), 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn identity_cluster_is_the_point() {
        let g = annulus_grid(5.0, 1.0, 4.0, 128);
        for b in [
            [4.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
            [2.0 * 2f64.sqrt(), 2.0 * 2f64.sqrt(), 0.0],
        ] {
            let est = estimate_cluster_set(&MappingSpec::Identity, &b, 6, 30, &g).unwrap();
            assert_eq!(est.points.len(), 1);
            assert!(distance(&est.points[0], &b) < 1e-6);
            assert!(est.diameter == 0.0);
        }
    }

    #[test]
    fn radial_cluster_lands_on_the_ray() {
        let g = annulus_grid(5.0, 1.0, 4.0, 128);
        let inv = MappingSpec::RadialPower {
            alpha: 0.5,
            center: [0.0; 3],
        };
        let t = 0.3f64;
        let b = [4.0 * t.cos(), 4.0 * t.sin(), 0.0];
        let est = estimate_cluster_set(&inv, &b, 8, 24, &g).unwrap();
        assert_eq!(est.points.len(), 1);
        assert!(est.diameter < 2.0 * g.h());
        let y = est.points[0];
        assert!((distance(&y, &[0.0; 3]) - 2.0).abs() < 2.0 * g.h());
        assert!((y[1].atan2(y[0]) - t).abs() < 1e-6);
    }

    #[test]
    fn cluster_in_space() {
        let g = GridDomain::cube(3, -5.0, 5.0, 32).unwrap();
        let g = g.masked(&RegionSpec::annulus([0.0; 3], 1.0, 4.0)).unwrap();
        let inv = MappingSpec::RadialPower {
            alpha: 0.5,
            center: [0.0; 3],
        };
        let est = estimate_cluster_set(&inv, &[0.0, 0.0, 4.0], 8, 24, &g).unwrap();
        assert_eq!(est.points.len(), 1);
        assert!((distance(&est.points[0], &[0.0; 3]) - 2.0).abs() < 2.0 * g.h());
    }

    #[test]
    fn interior_point_is_rejected() {
        let g = annulus_grid(5.0, 1.0, 4.0, 64);
        let r = estimate_cluster_set(&MappingSpec::Identity, &[2.5, 0.0, 0.0], 4, 10, &g);
        assert!(matches!(r, Err(Error::Domain(_))));
        let far = estimate_cluster_set(&MappingSpec::Identity, &[40.0, 0.0, 0.0], 4, 10, &g);
        assert!(matches!(far, Err(Error::Domain(_))));
    }
}
