use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::{CellSet, Point, PointSet};

const OUTSIDE: u32 = u32::MAX;

/// A box of `cells[0] x ... x cells[n-1]` square cells of side `h`, with a
/// mask selecting the cells that belong to the domain.
///
/// Cells are addressed by a linear id `i0 + c0 * (i1 + c1 * i2)`. Fields on
/// the domain are stored per inside cell, in increasing linear-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    n: usize,
    origin: Point,
    cells: [usize; 3],
    h: f64,
    mask: Vec<bool>,
    inside: Vec<usize>,
    index: Vec<u32>,
}

impl GridDomain {
    /// Full box with lower corner `origin`.
    pub fn new(n: usize, origin: Point, cells: &[usize], h: f64) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::Domain(format!("grids support n = 2 or 3, got {n}")));
        }
        if cells.len() != n || cells.contains(&0) {
            return Err(Error::Domain(format!(
                "need {n} positive cell counts, got {cells:?}"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!(
                "cell size must be positive, got {h}"
            )));
        }
        let mut c = [1usize; 3];
        c[..n].copy_from_slice(cells);
        let total = c[0] * c[1] * c[2];
        if total >= OUTSIDE as usize {
            return Err(Error::Domain("grid too large".into()));
        }
        let mut o = origin;
        o[n..].iter_mut().for_each(|v| *v = 0.0);
        Self::with_mask_vec(n, o, c, h, vec![true; total])
    }

    /// Cube `[lo, hi]^n` split into `per_axis` cells along each axis.
    pub fn cube(n: usize, lo: f64, hi: f64, per_axis: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Domain(format!(
                "cube needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Self::new(n, [lo; 3], &vec![per_axis; n], (hi - lo) / per_axis as f64)
    }

    /// Restricts the domain to the cells whose centers lie in `region`.
    pub fn masked(&self, region: &dyn PointSet) -> Result<Self> {
        let mask = (0..self.mask.len())
            .map(|id| self.mask[id] && region.contains(&self.center(id)))
            .collect();
        Self::with_mask_vec(self.n, self.origin, self.cells, self.h, mask)
    }

    /// Same box with an explicit mask over all cells.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.mask.len() {
            return Err(Error::Domain("mask length does not match the grid".into()));
        }
        Self::with_mask_vec(self.n, self.origin, self.cells, self.h, mask)
    }

    fn with_mask_vec(
        n: usize,
        origin: Point,
        cells: [usize; 3],
        h: f64,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let mut index = vec![OUTSIDE; mask.len()];
        let mut inside = Vec::new();
        for (id, &m) in mask.iter().enumerate() {
            if m {
                index[id] = inside.len() as u32;
                inside.push(id);
            }
        }
        let grid = GridDomain {
            n,
            origin,
            cells,
            h,
            mask,
            inside,
            index,
        };
        if grid.inside.is_empty() {
            return Err(Error::Geometry("domain mask selects no cells".into()));
        }
        let all = CellSet::from_sorted(grid.inside.clone());
        if !grid.is_connected(&all) {
            return Err(Error::Geometry("domain is not face-connected".into()));
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.n]
    }

    pub fn extent(&self) -> Vec<f64> {
        self.cells().iter().map(|&c| c as f64 * self.h).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.mask.len()
    }

    pub fn inside_count(&self) -> usize {
        self.inside.len()
    }

    /// Linear ids of the inside cells, ascending.
    pub fn inside_cells(&self) -> &[usize] {
        &self.inside
    }

    pub fn is_inside(&self, id: usize) -> bool {
        self.mask.get(id).copied().unwrap_or(false)
    }

    /// Position of an inside cell in field storage.
    pub fn field_index(&self, id: usize) -> Option<usize> {
        match self.index.get(id) {
            Some(&i) if i != OUTSIDE => Some(i as usize),
            _ => None,
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    pub fn volume(&self) -> f64 {
        self.inside.len() as f64 * self.cell_volume()
    }

    pub fn coords(&self, id: usize) -> [usize; 3] {
        let c = self.cells;
        [id % c[0], (id / c[0]) % c[1], id / (c[0] * c[1])]
    }

    pub fn linear(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.cells[0] * (ijk[1] + self.cells[1] * ijk[2])
    }

    pub fn center(&self, id: usize) -> Point {
        let ijk = self.coords(id);
        let mut x = [0.0; 3];
        for a in 0..self.n {
            x[a] = self.origin[a] + (ijk[a] as f64 + 0.5) * self.h;
        }
        x
    }

    /// Linear id of the cell containing `x`, if `x` lies in the box.
    pub fn locate(&self, x: &Point) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for a in 0..self.n {
            let t = (x[a] - self.origin[a]) / self.h;
            if !(t >= 0.0) || t > self.cells[a] as f64 {
                return None;
            }
            ijk[a] = (t.floor() as usize).min(self.cells[a] - 1);
        }
        Some(self.linear(ijk))
    }

    /// Whether `x` lies in the closed bounding box.
    pub fn box_contains(&self, x: &Point) -> bool {
        (0..self.n).all(|a| {
            let t = x[a] - self.origin[a];
            t >= 0.0 && t <= self.cells[a] as f64 * self.h
        })
    }

    /// Face neighbours inside the box (not necessarily inside the mask),
    /// as `(id, axis, forward)`.
    pub fn face_neighbors(&self, id: usize) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        let ijk = self.coords(id);
        (0..self.n).flat_map(move |a| {
            let stride = self.stride(a);
            let back = (ijk[a] > 0).then(|| (id - stride, a, false));
            let fwd = (ijk[a] + 1 < self.cells[a]).then(|| (id + stride, a, true));
            back.into_iter().chain(fwd)
        })
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.cells[0],
            _ => self.cells[0] * self.cells[1],
        }
    }

    /// Faces between pairs of inside cells, as `(lower id, upper id, axis)`,
    /// ordered by lower id then axis.
    pub fn inside_faces(&self) -> Vec<(usize, usize, usize)> {
        let mut faces = Vec::with_capacity(self.inside.len() * self.n);
        for &id in &self.inside {
            for (nb, axis, fwd) in self.face_neighbors(id) {
                if fwd && self.mask[nb] {
                    faces.push((id, nb, axis));
                }
            }
        }
        faces
    }

    /// Face connectivity of a set of cells.
    pub fn is_connected(&self, set: &CellSet) -> bool {
        let Some(&start) = set.as_slice().first() else {
            return true;
        };
        let member = set.membership(self.total_cells());
        let mut seen = vec![false; self.total_cells()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(id) = queue.pop_front() {
            for (nb, _, _) in self.face_neighbors(id) {
                if member[nb] && !seen[nb] {
                    seen[nb] = true;
                    count += 1;
                    queue.push_back(nb);
                }
            }
        }
        count == set.len()
    }

    /// Face-adjacency distances (in cells) from `sources` through inside cells.
    pub fn bfs_distance(&self, sources: &CellSet) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.total_cells()];
        let mut queue = VecDeque::new();
        for &s in sources.as_slice() {
            dist[s] = 0;
            queue.push_back(s);
        }
        while let Some(id) = queue.pop_front() {
            let d = dist[id] + 1;
            for (nb, _, _) in self.face_neighbors(id) {
                if self.mask[nb] && dist[nb] == u32::MAX {
                    dist[nb] = d;
                    queue.push_back(nb);
                }
            }
        }
        dist
    }
}

/// Inside cells whose centers lie in `region`.
pub fn rasterize(region: &dyn PointSet, grid: &GridDomain) -> CellSet {
    CellSet::from_sorted(
        grid.inside
            .iter()
            .copied()
            .filter(|&id| region.contains(&grid.center(id)))
            .collect(),
    )
}
