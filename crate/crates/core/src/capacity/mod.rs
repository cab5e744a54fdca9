//! Variational p-capacity of condensers on grids, and closed forms for rings.

mod exact;
mod solver;

pub use exact::{accessibility_lower_bound, ring_capacity_exact, unit_sphere_area};
pub use solver::{
    initial_field, solve_capacity, solve_capacity_from, CapacityResult, EnergyRecord,
    SolverOptions, StepRule,
};
