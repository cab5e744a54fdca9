use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use qcap_core::boundary_probe::{
    estimate_cluster_set, probe_strong_accessibility, sample_shell_continua, AccessibilityProbe,
};
use qcap_core::capacity::{ring_capacity_exact, solve_capacity, SolverOptions};
use qcap_core::distortion_check::{
    verify_capacity_inequality, verify_dual_inequality, DistortionReport,
};
use qcap_core::geometry::{make_ring_condenser, point_serde, rasterize, Condenser, GridDomain};
use qcap_core::mappings::distortion_coefficient;
use qcap_core::modulus::check_hesse_shlyk;

use crate::config::{validate, Command, Diagnostic, ExperimentConfig, RingCase};

pub const VERSION: &str = concat!("qcap ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Core(#[from] qcap_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

fn join(d: &[Diagnostic]) -> String {
    d.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        use qcap_core::Error as E;
        match self {
            RunError::Core(E::Geometry(_) | E::EmptySet) => 4,
            RunError::Core(E::Singularity(_)) => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        use qcap_core::Error as E;
        match self {
            RunError::Invalid(_) => "validation",
            RunError::Core(E::Geometry(_) | E::EmptySet) => "geometry",
            RunError::Core(E::Singularity(_)) => "numerical",
            RunError::Core(E::Window(_)) => "exponent_window",
            RunError::Core(E::Degenerate { .. }) => "degenerate_mapping",
            RunError::Core(E::Domain(_)) => "domain",
            RunError::Io(_) | RunError::Csv(_) => "io",
            RunError::Threads(_) => "threads",
        }
    }
}

/// A CSV series: header and rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Series {
    fn new(header: &[&str]) -> Self {
        Series {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Result of a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub result: Value,
    pub series: Series,
    /// False when some solver stopped on its iteration budget.
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub command: &'static str,
    pub status: &'static str,
    pub config: Option<ExperimentConfig>,
    pub result: Option<Value>,
    pub error: Option<ErrorInfo>,
}

fn f(v: f64) -> String {
    format!("{v:.17e}")
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn grid_of(c: &ExperimentConfig, image: bool) -> qcap_core::Result<Arc<GridDomain>> {
    let spec = if image {
        c.image_grid.as_ref()
    } else {
        c.grid.as_ref()
    };
    spec.expect("validated").build(c.dimension)
}

fn condenser_of(c: &ExperimentConfig, grid: Arc<GridDomain>) -> qcap_core::Result<Condenser> {
    if let Some(r) = &c.ring {
        return make_ring_condenser(r.center, r.r1, r.r2, grid);
    }
    let plates = c.plates.as_ref().expect("validated");
    Condenser::from_shapes(Arc::new(plates.e.clone()), Arc::new(plates.f.clone()), grid)
}

fn distortion_row(series: &mut Series, c: &ExperimentConfig, r: &DistortionReport) {
    let map = serde_json::to_string(c.mapping.as_ref().expect("validated")).unwrap_or_default();
    let ring = c.ring.as_ref().expect("validated");
    series.push(vec![
        map,
        format!("ring({},{})", ring.r1, ring.r2),
        f(c.p.unwrap_or(f64::NAN)),
        f(c.q.unwrap_or(f64::NAN)),
        f(r.lhs),
        f(r.rhs_k * r.rhs_cap),
        f(r.slack),
        r.pass.to_string(),
    ]);
}

/// Ring calibration: solver against the closed form, one case per suite entry
/// and resolution. Returns `(tau_disc, rows)`.
pub fn calibrate(
    suite: &[RingCase],
    resolutions: &[usize],
    opts: &SolverOptions,
) -> qcap_core::Result<(f64, Vec<Value>)> {
    let jobs: Vec<(RingCase, usize)> = suite
        .iter()
        .flat_map(|&r| resolutions.iter().map(move |&k| (r, k)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(r, cells)| {
            let half = 1.15 * r.r2;
            let grid = Arc::new(GridDomain::cube(r.n, -half, half, cells)?);
            let cond = make_ring_condenser([0.0; 3], r.r1, r.r2, grid)?;
            let res = solve_capacity(&cond, r.p, opts)?;
            let exact = ring_capacity_exact(r.n, r.p, r.r1, r.r2)?;
            Ok(json!({
                "n": r.n, "p": r.p, "r1": r.r1, "r2": r.r2, "cells": cells,
                "numeric": res.value, "exact": exact,
                "rel_error": (res.value - exact).abs() / exact,
                "converged": res.converged,
            }))
        })
        .collect::<qcap_core::Result<Vec<Value>>>()?;
    let tau = rows
        .iter()
        .map(|r| r["rel_error"].as_f64().unwrap_or(f64::NAN))
        .fold(0.0, f64::max);
    Ok((tau, rows))
}

/// Runs a validated command.
pub fn run(command: Command, c: &ExperimentConfig) -> Result<Outcome, RunError> {
    let diags = validate(command, c);
    if !diags.is_empty() {
        return Err(RunError::Invalid(diags));
    }
    let n = c.dimension;
    let opts = &c.solver;
    let mut converged = true;
    let (result, series) = match command {
        Command::Ring => {
            let p = c.p.expect("validated");
            let r = c.ring.as_ref().expect("validated");
            let exact = ring_capacity_exact(n, p, r.r1, r.r2)?;
            let mut s = Series::new(&["n", "p", "r1", "r2", "exact"]);
            s.push(vec![n.to_string(), f(p), f(r.r1), f(r.r2), f(exact)]);
            (
                json!({"n": n, "p": p, "r1": r.r1, "r2": r.r2, "exact": exact}),
                s,
            )
        }
        Command::Cap => {
            let p = c.p.expect("validated");
            let cond = condenser_of(c, grid_of(c, false)?)?;
            let res = solve_capacity(&cond, p, opts)?;
            converged = res.converged;
            let mut s = Series::new(&["iteration", "eps", "energy"]);
            for e in &res.energy_history {
                s.push(vec![e.iteration.to_string(), f(e.eps), f(e.energy)]);
            }
            let mut v = to_value(&res);
            if let (Some(r), Value::Object(map)) = (&c.ring, &mut v) {
                let exact = ring_capacity_exact(n, p, r.r1, r.r2)?;
                map.insert("exact".into(), json!(exact));
                map.insert("rel_error".into(), json!((res.value - exact).abs() / exact));
            }
            (v, s)
        }
        Command::Kcoef => {
            let grid = grid_of(c, false)?;
            let k = distortion_coefficient(
                c.mapping.as_ref().expect("validated"),
                &grid,
                c.p.unwrap(),
                c.q.unwrap(),
            )?;
            let mut s = Series::new(&["p", "q", "value", "flagged_cells"]);
            s.push(vec![
                f(c.p.unwrap()),
                f(c.q.unwrap()),
                f(k.value),
                k.flagged_cells.to_string(),
            ]);
            (to_value(&k), s)
        }
        Command::Distort | Command::Dual => {
            let (p, q) = (c.p.unwrap(), c.q.unwrap());
            let m = c.mapping.as_ref().expect("validated");
            let source = grid_of(c, false)?;
            let image = grid_of(c, true)?;
            let r = if command == Command::Distort {
                let ring = c.ring.as_ref().expect("validated");
                let cond = make_ring_condenser(ring.center, ring.r1, ring.r2, image)?;
                verify_capacity_inequality(m, &cond, p, q, source, opts, c.tau)?
            } else {
                let cond = condenser_of(c, source)?;
                verify_dual_inequality(m, &cond, p, q, image, opts, c.tau)?
            };
            converged = r.converged;
            let mut s = Series::new(&["map", "condenser", "p", "q", "lhs", "rhs", "slack", "pass"]);
            distortion_row(&mut s, c, &r);
            (to_value(&r), s)
        }
        Command::Modulus => {
            let p = c.p.unwrap();
            let cond = condenser_of(c, grid_of(c, false)?)?;
            let counts = &c.modulus.as_ref().expect("validated").curve_counts;
            let runs = counts
                .par_iter()
                .map(|&k| check_hesse_shlyk(&cond, p, k, opts))
                .collect::<qcap_core::Result<Vec<_>>>()?;
            converged = runs.iter().all(|r| r.converged);
            let mut s = Series::new(&["curve_count", "modulus", "capacity", "ratio"]);
            for r in &runs {
                s.push(vec![
                    r.curve_count.to_string(),
                    f(r.modulus),
                    f(r.capacity),
                    f(r.ratio),
                ]);
            }
            let mut order: Vec<usize> = (0..runs.len()).collect();
            order.sort_by_key(|&i| runs[i].curve_count);
            let monotone = order
                .windows(2)
                .all(|w| runs[w[0]].modulus <= runs[w[1]].modulus + 1e-3 * runs[w[1]].modulus);
            (
                json!({"runs": to_value(&runs), "non_decreasing_in_curve_count": monotone}),
                s,
            )
        }
        Command::Access => {
            let a = c.access.as_ref().expect("validated");
            let grid = grid_of(c, false)?;
            let e = rasterize(&a.e, &grid);
            let continua = sample_shell_continua(&a.u, &a.v, &e, a.continua, c.seed, &grid)?;
            let probe = AccessibilityProbe {
                x0: a.x0,
                u: a.u.clone(),
                v: a.v.clone(),
                e,
                p: c.p.unwrap(),
                continua,
            };
            let r = probe_strong_accessibility(&probe, grid, opts, a.constant)?;
            converged = r.converged;
            let mut s = Series::new(&["continuum", "capacity", "diameter", "cells"]);
            for (i, rec) in r.per_continuum.iter().enumerate() {
                s.push(vec![
                    i.to_string(),
                    f(rec.capacity),
                    f(rec.diameter),
                    rec.cells.to_string(),
                ]);
            }
            let ratio = r.lower_bound.map(|b| r.delta_hat / b);
            let mut v = to_value(&r);
            if let Value::Object(map) = &mut v {
                map.insert("seed".into(), json!(c.seed));
                map.insert("delta_hat_over_bound".into(), json!(ratio));
            }
            (v, s)
        }
        Command::Cluster => {
            let cl = c.cluster.as_ref().expect("validated");
            let grid = grid_of(c, false)?;
            let m = c.mapping.as_ref().expect("validated");
            let h = grid.h();
            let estimates = cl
                .points
                .par_iter()
                .map(|pt| {
                    let b = point_serde::from_slice(pt).map_err(qcap_core::Error::Domain)?;
                    let est = estimate_cluster_set(m, &b, cl.sequences, cl.depth, &grid)?;
                    Ok((b, est))
                })
                .collect::<qcap_core::Result<Vec<_>>>()?;
            let mut s = Series::new(&["index", "b0", "b1", "b2", "clusters", "diameter"]);
            let mut list = Vec::new();
            for (i, (b, est)) in estimates.iter().enumerate() {
                s.push(vec![
                    i.to_string(),
                    f(b[0]),
                    f(b[1]),
                    f(b[2]),
                    est.points.len().to_string(),
                    f(est.diameter),
                ]);
                list.push(json!({
                    "boundary_point": &b[..n],
                    "estimate": to_value(est),
                    "singleton": est.diameter < 3.0 * h,
                }));
            }
            let max_diam = estimates
                .iter()
                .map(|(_, e)| e.diameter)
                .fold(0.0, f64::max);
            (
                json!({"h": h, "estimates": list, "max_diameter": max_diam}),
                s,
            )
        }
        Command::Calibrate => {
            let cal = c.calibrate.clone().unwrap_or_default();
            let (tau, rows) = calibrate(&cal.suite, &cal.resolutions, opts)?;
            converged = rows
                .iter()
                .all(|r| r["converged"].as_bool().unwrap_or(false));
            let mut s = Series::new(&[
                "n",
                "p",
                "r1",
                "r2",
                "cells",
                "numeric",
                "exact",
                "rel_error",
            ]);
            for r in &rows {
                s.push(
                    [
                        "n",
                        "p",
                        "r1",
                        "r2",
                        "cells",
                        "numeric",
                        "exact",
                        "rel_error",
                    ]
                    .iter()
                    .map(|k| r[*k].to_string())
                    .collect(),
                );
            }
            (json!({"tau_disc": tau, "cases": rows}), s)
        }
    };
    Ok(Outcome {
        result,
        series,
        converged,
    })
}

/// Where and how a run writes its reports.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn write_json(path: &Path, report: &Report) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

fn write_csv(path: &Path, s: &Series) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&s.header)?;
    for r in &s.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn load(inv: &Invocation) -> Result<ExperimentConfig, RunError> {
    let invalid = |message: String| {
        RunError::Invalid(vec![Diagnostic {
            field: "config".into(),
            message,
        }])
    };
    let text = fs::read_to_string(&inv.config)
        .map_err(|e| invalid(format!("cannot read {}: {e}", inv.config.display())))?;
    let mut c = ExperimentConfig::from_json(&text).map_err(|e| invalid(e.to_string()))?;
    if let Some(seed) = inv.seed {
        c.seed = seed;
    }
    Ok(c.resolve(inv.command))
}

/// Loads, validates and runs a configuration, writes `<out>/<command>.json`
/// (and `.csv` when the config asks for it) and returns the exit status with
/// the report.
pub fn execute(inv: &Invocation) -> (i32, Report) {
    let name = inv.command.name();
    let (code, report, series) = match load(inv) {
        Err(e) => (e.exit_code(), error_report(name, None, &e), None),
        Ok(config) => {
            let outcome = rayon::ThreadPoolBuilder::new()
                .num_threads(inv.threads.unwrap_or(0))
                .build()
                .map_err(RunError::from)
                .and_then(|pool| pool.install(|| run(inv.command, &config)));
            match outcome {
                Ok(o) => {
                    let status = if o.converged { "ok" } else { "non_converged" };
                    let series = config.csv.then_some(o.series);
                    let report = Report {
                        version: VERSION,
                        command: name,
                        status,
                        config: Some(config),
                        result: Some(o.result),
                        error: None,
                    };
                    (if o.converged { 0 } else { 3 }, report, series)
                }
                Err(e) => (e.exit_code(), error_report(name, Some(config), &e), None),
            }
        }
    };
    let written = fs::create_dir_all(&inv.out)
        .and_then(|_| write_json(&inv.out.join(format!("{name}.json")), &report))
        .map_err(RunError::from)
        .and_then(|_| match &series {
            Some(s) => write_csv(&inv.out.join(format!("{name}.csv")), s),
            None => Ok(()),
        });
    match written {
        Ok(()) => (code, report),
        Err(e) => (e.exit_code(), error_report(name, report.config, &e)),
    }
}

fn error_report(name: &'static str, config: Option<ExperimentConfig>, e: &RunError) -> Report {
    let diagnostics = match e {
        RunError::Invalid(d) => d.clone(),
        _ => Vec::new(),
    };
    Report {
        version: VERSION,
        command: name,
        status: "error",
        config,
        result: None,
        error: Some(ErrorInfo {
            kind: e.kind().into(),
            message: e.to_string(),
            diagnostics,
        }),
    }
}
