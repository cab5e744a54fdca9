use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{distance, point_serde, rasterize, GridDomain, Point, PointSet, RegionSpec};

/// Sorted, deduplicated set of linear cell ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CellSet(Vec<usize>);

impl CellSet {
    pub fn from_sorted(ids: Vec<usize>) -> Self {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        CellSet(ids)
    }

    pub fn from_unsorted(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        CellSet(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.0.iter().all(|&id| other.contains(id))
    }

    pub fn intersects(&self, other: &CellSet) -> bool {
        self.0.iter().any(|&id| other.contains(id))
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        CellSet::from_unsorted(self.0.iter().chain(&other.0).copied().collect())
    }

    pub(crate) fn membership(&self, total: usize) -> Vec<bool> {
        let mut m = vec![false; total];
        for &id in &self.0 {
            m[id] = true;
        }
        m
    }
}

/// Concentric ring plates `|x - center| <= r1` and `|x - center| >= r2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    #[serde(with = "point_serde")]
    pub center: Point,
    pub r1: f64,
    pub r2: f64,
}

/// A pair of plates on a grid: `e` is held at 0 and `f` at 1.
///
/// When the plates come from analytic sets the shapes are kept, so the
/// energy stencil can locate the plate boundary between cell centers.
#[derive(Debug, Clone)]
pub struct Condenser {
    pub e: CellSet,
    pub f: CellSet,
    pub domain: Arc<GridDomain>,
    pub e_shape: Option<Arc<dyn PointSet>>,
    pub f_shape: Option<Arc<dyn PointSet>>,
    pub ring: Option<Ring>,
}

impl Condenser {
    /// Checks that both plates are nonempty, disjoint, connected and inside.
    pub fn new(e: CellSet, f: CellSet, domain: Arc<GridDomain>) -> Result<Self> {
        for (name, plate) in [("E", &e), ("F", &f)] {
            if plate.is_empty() {
                return Err(Error::Geometry(format!("plate {name} is empty")));
            }
            if plate.as_slice().iter().any(|&id| !domain.is_inside(id)) {
                return Err(Error::Geometry(format!("plate {name} leaves the domain")));
            }
            if !domain.is_connected(plate) {
                return Err(Error::Geometry(format!("plate {name} is not connected")));
            }
        }
        if e.intersects(&f) {
            return Err(Error::Geometry("plates intersect".into()));
        }
        Ok(Condenser {
            e,
            f,
            domain,
            e_shape: None,
            f_shape: None,
            ring: None,
        })
    }

    /// Rasterizes both plates from analytic sets and keeps the shapes.
    pub fn from_shapes(
        e: Arc<dyn PointSet>,
        f: Arc<dyn PointSet>,
        domain: Arc<GridDomain>,
    ) -> Result<Self> {
        let ce = rasterize(e.as_ref(), &domain);
        let cf = rasterize(f.as_ref(), &domain);
        let mut c = Condenser::new(ce, cf, domain)?;
        c.e_shape = Some(e);
        c.f_shape = Some(f);
        Ok(c)
    }

    /// Plates exchanged; the capacity is unchanged by `u -> 1 - u`.
    pub fn swapped(&self) -> Condenser {
        Condenser {
            e: self.f.clone(),
            f: self.e.clone(),
            domain: self.domain.clone(),
            e_shape: self.f_shape.clone(),
            f_shape: self.e_shape.clone(),
            ring: None,
        }
    }

    /// Whether some face joins a cell of `e` to a cell of `f`.
    pub fn plates_touch(&self) -> bool {
        let fm = self.f.membership(self.domain.total_cells());
        self.e
            .as_slice()
            .iter()
            .any(|&id| self.domain.face_neighbors(id).any(|(nb, _, _)| fm[nb]))
    }

    pub fn free_count(&self) -> usize {
        self.domain.inside_count() - self.e.len() - self.f.len()
    }
}

/// Ring condenser `E = closed B(x0, r1)`, `F = complement of B(x0, r2)`.
pub fn make_ring_condenser(
    x0: Point,
    r1: f64,
    r2: f64,
    grid: Arc<GridDomain>,
) -> Result<Condenser> {
    if !(r1 > 0.0) || !(r1 < r2) {
        return Err(Error::Domain(format!(
            "ring needs 0 < r1 < r2, got r1={r1}, r2={r2}"
        )));
    }
    let origin = grid.origin();
    let extent = grid.extent();
    for a in 0..grid.dim() {
        if x0[a] - r2 < origin[a] || x0[a] + r2 > origin[a] + extent[a] {
            return Err(Error::Geometry(format!(
                "ball of radius {r2} leaves the grid along axis {a}"
            )));
        }
    }
    let e_shape: Arc<dyn PointSet> = Arc::new(RegionSpec::closed_ball(x0, r1));
    let f_shape: Arc<dyn PointSet> = Arc::new(RegionSpec::ball(x0, r2).complement());
    let mut c = Condenser::from_shapes(e_shape, f_shape, grid)?;
    if c.plates_touch() {
        return Err(Error::Geometry(format!(
            "plates merge: no free cell separates r1={r1} from r2={r2} at h={}",
            c.domain.h()
        )));
    }
    c.ring = Some(Ring { center: x0, r1, r2 });
    Ok(c)
}

/// Largest distance between two cell centers of the set.
pub fn diameter(cells: &CellSet, grid: &GridDomain) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::EmptySet);
    }
    // Extreme points lie among the first and last cells of each axis-0 line.
    let ids = cells.as_slice();
    let mut candidates = Vec::new();
    let row = |id: usize| id / grid.cells()[0];
    let mut start = 0;
    while start < ids.len() {
        let mut end = start;
        while end + 1 < ids.len() && row(ids[end + 1]) == row(ids[start]) {
            end += 1;
        }
        candidates.push(grid.center(ids[start]));
        if end != start {
            candidates.push(grid.center(ids[end]));
        }
        start = end + 1;
    }
    let mut best = 0.0f64;
    for (i, a) in candidates.iter().enumerate() {
        for b in &candidates[i + 1..] {
            best = best.max(distance(a, b));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(n: usize) -> Arc<GridDomain> {
        Arc::new(GridDomain::cube(2, 0.0, 1.0, n).unwrap())
    }

    #[test]
    fn ring_condenser_valid() {
        let g = square(128);
        let c = make_ring_condenser([0.5, 0.5, 0.0], 0.25, 0.45, g).unwrap();
        assert!(!c.e.intersects(&c.f));
        assert!(!c.plates_touch());
        assert!(c.free_count() > 0);
    }

    #[test]
    fn ring_condenser_too_coarse() {
        let g = square(20);
        let r = make_ring_condenser([0.5, 0.5, 0.0], 0.25, 0.26, g);
        assert!(matches!(r, Err(Error::Geometry(_))), "{r:?}");
    }

    #[test]
    fn ring_condenser_bad_radii() {
        let g = square(32);
        assert!(matches!(
            make_ring_condenser([0.5; 3], 0.3, 0.2, g.clone()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            make_ring_condenser([0.5, 0.5, 0.0], 0.2, 0.6, g),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn ring_plate_volumes_3d() {
        let g = Arc::new(GridDomain::cube(3, -1.25, 1.25, 64).unwrap());
        let c = make_ring_condenser([0.0; 3], 0.5, 1.0, g.clone()).unwrap();
        let v = g.cell_volume();
        let pi = std::f64::consts::PI;
        let ball = 4.0 / 3.0 * pi * 0.125;
        let outer = 2.5f64.powi(3) - 4.0 / 3.0 * pi;
        assert!((c.e.len() as f64 * v / ball - 1.0).abs() < 0.03);
        assert!((c.f.len() as f64 * v / outer - 1.0).abs() < 0.03);
    }

    #[test]
    fn construction_is_deterministic() {
        let a = make_ring_condenser([0.5, 0.5, 0.0], 0.2, 0.4, square(64)).unwrap();
        let b = make_ring_condenser([0.5, 0.5, 0.0], 0.2, 0.4, square(64)).unwrap();
        assert_eq!(a.e, b.e);
        assert_eq!(a.f, b.f);
    }

    #[test]
    fn condenser_invariants() {
        let g = square(8);
        let e = CellSet::from_sorted(vec![0, 1]);
        assert!(Condenser::new(e.clone(), CellSet::default(), g.clone()).is_err());
        assert!(Condenser::new(e.clone(), CellSet::from_sorted(vec![1, 2]), g.clone()).is_err());
        // {0, 2} is not face-connected
        assert!(Condenser::new(
            CellSet::from_sorted(vec![0, 2]),
            CellSet::from_sorted(vec![63]),
            g.clone()
        )
        .is_err());
        assert!(Condenser::new(e, CellSet::from_sorted(vec![63]), g).is_ok());
    }

    #[test]
    fn diameter_examples() {
        let g = square(10);
        assert!(matches!(
            diameter(&CellSet::default(), &g),
            Err(Error::EmptySet)
        ));
        assert_eq!(diameter(&CellSet::from_sorted(vec![13]), &g).unwrap(), 0.0);
        let d = diameter(
            &CellSet::from_sorted(vec![g.linear([2, 3, 0]), g.linear([2, 7, 0])]),
            &g,
        )
        .unwrap();
        assert!((d - 0.4).abs() < 1e-12);
        let d = diameter(
            &CellSet::from_sorted(vec![g.linear([1, 3, 0]), g.linear([6, 3, 0])]),
            &g,
        )
        .unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    fn brute_diameter(cells: &CellSet, g: &GridDomain) -> f64 {
        let pts: Vec<_> = cells.as_slice().iter().map(|&id| g.center(id)).collect();
        let mut best = 0.0f64;
        for a in &pts {
            for b in &pts {
                best = best.max(distance(a, b));
            }
        }
        best
    }

    #[test]
    fn diameter_of_ball() {
        let g = GridDomain::cube(2, -1.0, 1.0, 80).unwrap();
        let ball = rasterize(&RegionSpec::ball([0.1, -0.2, 0.0], 0.6), &g);
        let d = diameter(&ball, &g).unwrap();
        assert_eq!(d, brute_diameter(&ball, &g));
        assert!((d - 1.2).abs() < 2.0 * g.h());
    }

    proptest! {
        #[test]
        fn diameter_matches_brute_force(ids in proptest::collection::vec(0usize..216, 1..40)) {
            let g = GridDomain::cube(3, 0.0, 1.0, 6).unwrap();
            let set = CellSet::from_unsorted(ids);
            prop_assert!((diameter(&set, &g).unwrap() - brute_diameter(&set, &g)).abs() < 1e-12);
        }

        #[test]
        fn rasterization_is_monotone(cx in 0.2f64..0.8, cy in 0.2f64..0.8, r in 0.0f64..0.5, dr in 0.0f64..0.3) {
            let g = GridDomain::cube(2, 0.0, 1.0, 32).unwrap();
            let small = RegionSpec::ball([cx, cy, 0.0], r);
            let big = RegionSpec::Union { regions: vec![RegionSpec::ball([cx, cy, 0.0], r + dr), RegionSpec::boxed([0.0; 3], [0.1, 0.1, 0.0])] };
            prop_assert!(rasterize(&small, &g).is_subset(&rasterize(&big, &g)));
            let inter = RegionSpec::Intersection { regions: vec![small.clone(), RegionSpec::boxed([0.0; 3], [cx, 1.0, 0.0])] };
            prop_assert!(rasterize(&inter, &g).is_subset(&rasterize(&small, &g)));
        }
    }
}
