//! Discrete p-Dirichlet energy on a uniform grid.
//!
//! Each cell `c` gets a squared gradient magnitude assembled from the
//! differences across its faces,
//!
//! ```text
//! s_c = sum over faces f of c:  w_{c,f} * ((u_j - u_i) / len_f)^2
//! ```
//!
//! and the energy is `sum_c (s_c + eps^2)^{p/2} * h^n`. An ordinary face has
//! `len_f = h` and `w = 1/2` on both sides, so every face is counted once in
//! total and, for `p = 2`, the energy is the 5-point (7-point in 3D) Dirichlet
//! form. Faces leaving the domain are dropped (natural boundary condition).
//!
//! A *cut face* joins a free cell to a plate cell whose analytic boundary
//! crosses the face at a fraction `theta` of the way. Its length becomes
//! `theta * h`, the free side weight `theta` and the plate side weight `0`,
//! so for `p = 2` the face conductance is `1/theta`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Condenser, GridDomain, Point, PointSet};

/// Values on the inside cells of a grid, in field-index order.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub values: Vec<f64>,
    domain: Arc<GridDomain>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>, domain: Arc<GridDomain>) -> Result<Self> {
        if values.len() != domain.inside_count() {
            return Err(Error::Domain(format!(
                "field has {} values, domain has {} inside cells",
                values.len(),
                domain.inside_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field values must be finite".into()));
        }
        Ok(ScalarField { values, domain })
    }

    pub fn constant(value: f64, domain: Arc<GridDomain>) -> Self {
        ScalarField {
            values: vec![value; domain.inside_count()],
            domain,
        }
    }

    /// Samples `f` at the inside cell centers.
    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(&Point) -> f64) -> Self {
        let values = domain
            .inside_cells()
            .iter()
            .map(|&id| f(&domain.center(id)))
            .collect();
        ScalarField { values, domain }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    /// Value at a linear cell id, if inside.
    pub fn at(&self, id: usize) -> Option<f64> {
        self.domain.field_index(id).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub p: f64,
    pub eps: f64,
}

impl EnergyParams {
    pub fn new(p: f64, eps: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("p must exceed 1, got {p}")));
        }
        if !(eps >= 0.0) {
            return Err(Error::Domain(format!("eps must be nonnegative, got {eps}")));
        }
        Ok(EnergyParams { p, eps })
    }
}

#[derive(Debug, Clone, Copy)]
struct Face {
    i: u32,
    j: u32,
    inv_len2: f64,
    wi: f64,
    wj: f64,
}

/// Face list with weights; evaluates the energy and its gradient.
#[derive(Debug, Clone)]
pub struct Stencil {
    domain: Arc<GridDomain>,
    faces: Vec<Face>,
    cut_faces: usize,
}

/// Smallest admitted boundary fraction on a cut face.
pub const THETA_MIN: f64 = 0.1;

impl Stencil {
    pub fn plain(domain: Arc<GridDomain>) -> Self {
        let inv_len2 = 1.0 / (domain.h() * domain.h());
        let faces = domain
            .inside_faces()
            .into_iter()
            .map(|(a, b, _)| Face {
                i: domain.field_index(a).unwrap() as u32,
                j: domain.field_index(b).unwrap() as u32,
                inv_len2,
                wi: 0.5,
                wj: 0.5,
            })
            .collect();
        Stencil {
            domain,
            faces,
            cut_faces: 0,
        }
    }

    /// Stencil for a condenser. With `fit_boundary`, faces between a free
    /// cell and a plate with a known shape are cut at the plate boundary.
    pub fn for_condenser(c: &Condenser, fit_boundary: bool) -> Self {
        let mut st = Stencil::plain(c.domain.clone());
        if !fit_boundary {
            return st;
        }
        let grid = &c.domain;
        let h = grid.h();
        let labels = plate_labels(c);
        let inside = grid.inside_cells();
        for face in &mut st.faces {
            let (li, lj) = (labels[face.i as usize], labels[face.j as usize]);
            let (free, plate, label, free_is_i) = match (li, lj) {
                (Label::Free, Label::E | Label::F) => (face.i, face.j, lj, true),
                (Label::E | Label::F, Label::Free) => (face.j, face.i, li, false),
                _ => continue,
            };
            let shape = match label {
                Label::E => c.e_shape.as_deref(),
                _ => c.f_shape.as_deref(),
            };
            let Some(shape) = shape else { continue };
            let a = grid.center(inside[free as usize]);
            let b = grid.center(inside[plate as usize]);
            let theta = crossing_fraction(shape, &a, &b).max(THETA_MIN);
            face.inv_len2 = 1.0 / (theta * h).powi(2);
            let (wf, wp) = (theta, 0.0);
            if free_is_i {
                face.wi = wf;
                face.wj = wp;
            } else {
                face.wi = wp;
                face.wj = wf;
            }
            st.cut_faces += 1;
        }
        st
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn cut_faces(&self) -> usize {
        self.cut_faces
    }

    fn squared_gradients(&self, u: &[f64], s: &mut [f64]) {
        s.iter_mut().for_each(|v| *v = 0.0);
        for f in &self.faces {
            let d = u[f.j as usize] - u[f.i as usize];
            let q = d * d * f.inv_len2;
            s[f.i as usize] += f.wi * q;
            s[f.j as usize] += f.wj * q;
        }
    }

    pub fn energy(&self, u: &[f64], params: &EnergyParams) -> f64 {
        let mut s = vec![0.0; u.len()];
        self.squared_gradients(u, &mut s);
        self.sum_density(&s, params)
    }

    fn sum_density(&self, s: &[f64], params: &EnergyParams) -> f64 {
        let eps2 = params.eps * params.eps;
        let vol = self.domain.cell_volume();
        let total: f64 = if params.p == 2.0 {
            s.iter().map(|&v| v + eps2).sum()
        } else {
            let half = 0.5 * params.p;
            s.iter().map(|&v| (v + eps2).powf(half)).sum()
        };
        total * vol
    }

    /// Energy, with its gradient written into `grad`. `scratch` must have the
    /// field length and is overwritten.
    pub fn energy_and_gradient(
        &self,
        u: &[f64],
        params: &EnergyParams,
        grad: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<f64> {
        self.squared_gradients(u, scratch);
        let energy = self.sum_density(scratch, params);
        let eps2 = params.eps * params.eps;
        let vol = self.domain.cell_volume();
        let half = 0.5 * params.p;
        if params.eps == 0.0 && params.p < 2.0 && scratch.contains(&0.0) {
            return Err(Error::Singularity(format!(
                "|grad u| = 0 somewhere with p = {} < 2 and eps = 0",
                params.p
            )));
        }
        // scratch now holds d(energy)/d(s_c)
        for v in scratch.iter_mut() {
            *v = if params.p == 2.0 {
                vol
            } else {
                half * (*v + eps2).powf(half - 1.0) * vol
            };
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for f in &self.faces {
            let (i, j) = (f.i as usize, f.j as usize);
            let w = f.wi * scratch[i] + f.wj * scratch[j];
            let t = 2.0 * w * (u[i] - u[j]) * f.inv_len2;
            grad[i] += t;
            grad[j] -= t;
        }
        Ok(energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Label {
    Free,
    E,
    F,
}

pub(crate) fn plate_labels(c: &Condenser) -> Vec<Label> {
    let mut labels = vec![Label::Free; c.domain.inside_count()];
    for (set, label) in [(&c.e, Label::E), (&c.f, Label::F)] {
        for &id in set.as_slice() {
            if let Some(i) = c.domain.field_index(id) {
                labels[i] = label;
            }
        }
    }
    labels
}

/// First `t` in `(0, 1]` with `a + t (b - a)` in the shape, by bisection.
fn crossing_fraction(shape: &dyn PointSet, a: &Point, b: &Point) -> f64 {
    let at = |t: f64| {
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    };
    if !shape.contains(b) || shape.contains(a) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if shape.contains(&at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Energy of `u` with the plain stencil.
pub fn p_energy(u: &ScalarField, params: &EnergyParams) -> f64 {
    Stencil::plain(u.domain.clone()).energy(&u.values, params)
}

/// Gradient of [`p_energy`] with respect to every cell value.
pub fn p_energy_gradient(u: &ScalarField, params: &EnergyParams) -> Result<ScalarField> {
    let st = Stencil::plain(u.domain.clone());
    let mut grad = vec![0.0; u.values.len()];
    let mut scratch = vec![0.0; u.values.len()];
    st.energy_and_gradient(&u.values, params, &mut grad, &mut scratch)?;
    Ok(ScalarField {
        values: grad,
        domain: u.domain.clone(),
    })
}

/// Clamps into `[0, 1]` and pins the plates: 0 on `E`, 1 on `F`.
pub fn project_admissible(u: &ScalarField, c: &Condenser) -> ScalarField {
    let labels = plate_labels(c);
    let values = u
        .values
        .iter()
        .zip(&labels)
        .map(|(&v, l)| match l {
            Label::E => 0.0,
            Label::F => 1.0,
            Label::Free => v.clamp(0.0, 1.0),
        })
        .collect();
    ScalarField {
        values,
        domain: u.domain.clone(),
    }
}
