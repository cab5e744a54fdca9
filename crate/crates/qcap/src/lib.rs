//! Configuration-driven experiments on top of `qcap-core`.
//!
//! A run reads a JSON [`ExperimentConfig`], dispatches to one command and
//! writes a JSON report that embeds the resolved config and the tool
//! version. Exit statuses: 0 success, 2 invalid input, 3 a solver stopped on
//! its iteration budget, 4 geometry error.

// `!(p > 1.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{validate, Command, Diagnostic, ExperimentConfig};
pub use run::{execute, run, Invocation, Outcome, Report, RunError, VERSION};
