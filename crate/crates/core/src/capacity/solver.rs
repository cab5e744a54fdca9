use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Condenser;
use crate::penergy::{plate_labels, EnergyParams, Label, ScalarField, Stencil};

/// Line-search contract: sufficient decrease `c1`, curvature `c2` (strong
/// Wolfe), and an evaluation budget per search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub sufficient_decrease: f64,
    pub curvature: f64,
    pub max_evaluations: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            sufficient_decrease: 1e-4,
            curvature: 0.1,
            max_evaluations: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Iteration budget over all continuation stages.
    pub max_iterations: usize,
    /// Stage ends when the energy drops by less than `rel_tol` (relative)
    /// over `window` iterations.
    pub rel_tol: f64,
    pub window: usize,
    pub eps_schedule: Vec<f64>,
    pub step_rule: StepRule,
    /// Cut faces at analytic plate boundaries when the shapes are known.
    pub boundary_fit: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 50_000,
            rel_tol: 1e-9,
            window: 10,
            eps_schedule: vec![1e-1, 1e-2, 1e-3, 1e-4],
            step_rule: StepRule::default(),
            boundary_fit: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.rel_tol > 0.0) {
            return Err(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if self.window == 0 || self.max_iterations == 0 {
            return Err("window and max_iterations must be positive".into());
        }
        if self.eps_schedule.is_empty() || self.eps_schedule.iter().any(|&e| !(e > 0.0)) {
            return Err("eps_schedule must be a nonempty list of positive values".into());
        }
        if self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err("eps_schedule must be strictly decreasing".into());
        }
        let s = &self.step_rule;
        if !(0.0 < s.sufficient_decrease
            && s.sufficient_decrease < s.curvature
            && s.curvature < 1.0)
        {
            return Err("step rule needs 0 < sufficient_decrease < curvature < 1".into());
        }
        if s.max_evaluations == 0 {
            return Err("step rule needs a positive evaluation budget".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub iteration: usize,
    pub eps: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityResult {
    /// Regularized discrete energy at the last eps stage.
    pub value: f64,
    pub iterations: usize,
    pub final_eps: f64,
    pub energy_history: Vec<EnergyRecord>,
    pub converged: bool,
    #[serde(skip)]
    pub field: Option<ScalarField>,
}

/// Initial guess `d_E / (d_E + d_F)` from face-adjacency distances to the plates.
pub fn initial_field(c: &Condenser) -> ScalarField {
    let grid = &c.domain;
    let de = grid.bfs_distance(&c.e);
    let df = grid.bfs_distance(&c.f);
    let values = grid
        .inside_cells()
        .iter()
        .map(|&id| {
            let (a, b) = (de[id] as f64, df[id] as f64);
            if a + b == 0.0 || !(a + b).is_finite() {
                0.5
            } else {
                a / (a + b)
            }
        })
        .collect();
    ScalarField::new(values, grid.clone()).expect("distances are finite")
}

struct Problem<'a> {
    stencil: &'a Stencil,
    free: Vec<bool>,
    params: EnergyParams,
    grad: Vec<f64>,
    scratch: Vec<f64>,
}

impl Problem<'_> {
    /// Energy and gradient restricted to free cells.
    fn eval(&mut self, u: &[f64]) -> f64 {
        let e = self
            .stencil
            .energy_and_gradient(u, &self.params, &mut self.grad, &mut self.scratch)
            .expect("eps > 0 keeps the gradient regular");
        for (g, &f) in self.grad.iter_mut().zip(&self.free) {
            if !f {
                *g = 0.0;
            }
        }
        e
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient with components that push against an active bound removed.
fn project_gradient(u: &[f64], g: &[f64], out: &mut [f64]) {
    for ((o, &x), &gi) in out.iter_mut().zip(u).zip(g) {
        *o = if (x <= 0.0 && gi > 0.0) || (x >= 1.0 && gi < 0.0) {
            0.0
        } else {
            gi
        };
    }
}

/// Largest step keeping `u + t d` inside `[0, 1]`.
fn max_step(u: &[f64], d: &[f64]) -> f64 {
    let mut t = f64::INFINITY;
    for (&x, &di) in u.iter().zip(d) {
        if di > 0.0 {
            t = t.min((1.0 - x) / di);
        } else if di < 0.0 {
            t = t.min(-x / di);
        }
    }
    t.max(0.0)
}

struct Step {
    t: f64,
    energy: f64,
    hit_bound: bool,
}

/// Strong-Wolfe search on `t -> E(u + t d)` over `[0, t_max]`. On success `u`
/// holds the new point and `prob.grad` its gradient.
fn line_search(
    prob: &mut Problem,
    u: &mut [f64],
    d: &[f64],
    e0: f64,
    slope0: f64,
    t_init: f64,
    rule: &StepRule,
) -> Option<Step> {
    let base = u.to_vec();
    let t_max = max_step(&base, d);
    if !(t_max > 0.0) {
        return None;
    }
    let mut trial = vec![0.0; u.len()];
    let eval_at = |prob: &mut Problem, t: f64, out: &mut [f64]| {
        for ((o, &b), &di) in out.iter_mut().zip(&base).zip(d) {
            *o = (b + t * di).clamp(0.0, 1.0);
        }
        let e = prob.eval(out);
        (e, dot(&prob.grad, d))
    };
    let (mut lo, mut slope_lo) = (0.0, slope0);
    let mut hi: Option<(f64, f64)> = None;
    let mut t = t_init.min(t_max);
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..rule.max_evaluations {
        let (e, slope) = eval_at(prob, t, &mut trial);
        let armijo = e <= e0 + rule.sufficient_decrease * t * slope0 && e < e0;
        if armijo && best.is_none_or(|(_, be)| e < be) {
            best = Some((t, e));
        }
        if !armijo || slope > 0.0 {
            hi = Some((t, slope));
        } else if slope.abs() <= rule.curvature * slope0.abs() {
            u.copy_from_slice(&trial);
            return Some(Step {
                t,
                energy: e,
                hit_bound: false,
            });
        } else {
            if t >= t_max {
                u.copy_from_slice(&trial);
                return Some(Step {
                    t,
                    energy: e,
                    hit_bound: true,
                });
            }
            lo = t;
            slope_lo = slope;
        }
        t = match hi {
            Some((th, sh)) => {
                let width = th - lo;
                let secant = if sh > 0.0 && sh.is_finite() {
                    lo - slope_lo * width / (sh - slope_lo)
                } else {
                    lo + 0.5 * width
                };
                secant.clamp(lo + 0.1 * width, th - 0.1 * width)
            }
            None => (t * 4.0).min(t_max),
        };
        if hi.is_some_and(|(th, _)| th - lo <= 1e-14 * th.max(1e-300)) {
            break;
        }
    }
    let (t, _) = best?;
    let (e, _) = eval_at(prob, t, &mut trial);
    u.copy_from_slice(&trial);
    Some(Step {
        t,
        energy: e,
        hit_bound: t >= t_max,
    })
}

/// Minimizes the regularized discrete p-energy over admissible fields.
pub fn solve_capacity(c: &Condenser, p: f64, opts: &SolverOptions) -> Result<CapacityResult> {
    solve_capacity_from(c, p, opts, None)
}

/// As [`solve_capacity`], starting from `start` (projected onto the
/// admissible set) instead of the distance interpolation.
pub fn solve_capacity_from(
    c: &Condenser,
    p: f64,
    opts: &SolverOptions,
    start: Option<&ScalarField>,
) -> Result<CapacityResult> {
    opts.validate().map_err(Error::Domain)?;
    EnergyParams::new(p, 0.0)?;
    let stencil = Stencil::for_condenser(c, opts.boundary_fit);
    let labels = plate_labels(c);
    let free: Vec<bool> = labels.iter().map(|&l| l == Label::Free).collect();
    let init = match start {
        Some(s) => crate::penergy::project_admissible(s, c),
        None => initial_field(c),
    };
    let mut u = crate::penergy::project_admissible(&init, c).values;
    let len = u.len();
    let mut prob = Problem {
        stencil: &stencil,
        free,
        params: EnergyParams {
            p,
            eps: opts.eps_schedule[0],
        },
        grad: vec![0.0; len],
        scratch: vec![0.0; len],
    };
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    let mut energy = 0.0;
    let mut pg = vec![0.0; len];
    let mut pg_prev = vec![0.0; len];
    let mut d = vec![0.0; len];

    'stages: for &eps in &opts.eps_schedule {
        prob.params.eps = eps;
        energy = prob.eval(&u);
        history.push(EnergyRecord {
            iteration: iterations,
            eps,
            energy,
        });
        let stage_start = history.len() - 1;
        let mut restart = true;
        let mut last_slope = 0.0;
        let mut last_t = 0.0;
        let mut pg0 = None;
        loop {
            project_gradient(&u, &prob.grad, &mut pg);
            let norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let reference = *pg0.get_or_insert(norm);
            if norm == 0.0 || norm <= 1e-13 * reference {
                break;
            }
            if iterations >= opts.max_iterations {
                converged = false;
                break 'stages;
            }
            // Polak-Ribiere+ direction, restarted on bounds or ascent
            let beta = if restart {
                0.0
            } else {
                let denom = dot(&pg_prev, &pg_prev);
                let num = dot(&pg, &pg) - dot(&pg, &pg_prev);
                if denom > 0.0 {
                    (num / denom).max(0.0)
                } else {
                    0.0
                }
            };
            for i in 0..len {
                d[i] = -pg[i] + beta * d[i];
            }
            let mut slope = dot(&prob.grad, &d);
            if !(slope < 0.0) {
                for i in 0..len {
                    d[i] = -pg[i];
                }
                slope = dot(&prob.grad, &d);
            }
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let t_init = if last_t > 0.0 && last_slope < 0.0 {
                last_t * last_slope / slope
            } else {
                0.1 / dmax
            };
            pg_prev.copy_from_slice(&pg);
            let step = line_search(
                &mut prob,
                &mut u,
                &d,
                energy,
                slope,
                t_init,
                &opts.step_rule,
            );
            let Some(step) = step else {
                if restart {
                    break;
                }
                // retry once along steepest descent
                restart = true;
                prob.eval(&u);
                continue;
            };
            iterations += 1;
            energy = step.energy;
            history.push(EnergyRecord {
                iteration: iterations,
                eps,
                energy,
            });
            restart = step.hit_bound;
            last_t = step.t;
            last_slope = slope;
            let k = history.len() - 1;
            if k - stage_start >= opts.window {
                let old = history[k - opts.window].energy;
                if old - energy <= opts.rel_tol * energy.abs() {
                    break;
                }
            }
        }
    }
    let final_eps = prob.params.eps;
    let field = ScalarField::new(u, c.domain.clone())?;
    Ok(CapacityResult {
        value: energy,
        iterations,
        final_eps,
        energy_history: history,
        converged,
        field: Some(field),
    })
}
