//! Numerical experiments on condenser capacities and weak
//! (p,q)-quasiconformal mappings.
//!
//! The crate computes variational p-capacities of condensers on uniform
//! grids, p-moduli of sampled curve families, and the distortion functional
//! `K_{p,q}` of analytic mappings, and combines them into checks of the
//! capacitary distortion inequalities. See the guide in `book/` for a
//! walkthrough.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary_probe;
pub mod capacity;
pub mod distortion_check;
pub mod error;
pub mod exponents;
pub mod geometry;
pub mod mappings;
pub mod modulus;
pub mod penergy;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/exponents.md")]
    mod exponents {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/penergy.md")]
    mod penergy {}
    #[doc = include_str!("../../../book/src/capacity.md")]
    mod capacity {}
    #[doc = include_str!("../../../book/src/mappings.md")]
    mod mappings {}
    #[doc = include_str!("../../../book/src/modulus.md")]
    mod modulus {}
    #[doc = include_str!("../../../book/src/boundary.md")]
    mod boundary {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
