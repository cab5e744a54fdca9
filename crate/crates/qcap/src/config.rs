use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use qcap_core::capacity::SolverOptions;
use qcap_core::distortion_check::DEFAULT_TAU;
use qcap_core::geometry::{point_serde, GridDomain, Point, RegionSpec};
use qcap_core::mappings::MappingSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Capacity of a condenser.
    Cap,
    /// Closed-form ring capacity.
    Ring,
    /// Distortion coefficient of a mapping.
    Kcoef,
    /// Capacity distortion inequality.
    Distort,
    /// Dual capacity inequality for the inverse mapping.
    Dual,
    /// Modulus of radial curves against ring capacity.
    Modulus,
    /// Accessibility probe at a boundary point.
    Access,
    /// Cluster sets of an inverse mapping at boundary points.
    Cluster,
    /// Solver error against closed-form rings.
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cap => "cap",
            Command::Ring => "ring",
            Command::Kcoef => "kcoef",
            Command::Distort => "distort",
            Command::Dual => "dual",
            Command::Modulus => "modulus",
            Command::Access => "access",
            Command::Cluster => "cluster",
            Command::Calibrate => "calibrate",
        }
    }
}

/// A cube grid `[lo, hi]^n` split into `cells` cells per axis, optionally
/// restricted to `mask`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RegionSpec>,
}

impl GridSpec {
    pub fn build(&self, n: usize) -> qcap_core::Result<Arc<GridDomain>> {
        let g = GridDomain::cube(n, self.lo, self.hi, self.cells)?;
        Ok(Arc::new(match &self.mask {
            Some(m) => g.masked(m)?,
            None => g,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSpec {
    #[serde(default = "origin", with = "point_serde")]
    pub center: Point,
    pub r1: f64,
    pub r2: f64,
}

fn origin() -> Point {
    [0.0; 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatesSpec {
    pub e: RegionSpec,
    pub f: RegionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusSpec {
    pub curve_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessSpec {
    #[serde(with = "point_serde")]
    pub x0: Point,
    pub u: RegionSpec,
    pub v: RegionSpec,
    pub e: RegionSpec,
    pub continua: usize,
    /// Constant of the diameter bound; unknown in general.
    #[serde(default = "one")]
    pub constant: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub points: Vec<Vec<f64>>,
    #[serde(default = "default_sequences")]
    pub sequences: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_sequences() -> usize {
    8
}

fn default_depth() -> usize {
    24
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingCase {
    pub n: usize,
    pub p: f64,
    pub r1: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<usize>,
    #[serde(default = "default_suite")]
    pub suite: Vec<RingCase>,
}

impl Default for CalibrateSpec {
    fn default() -> Self {
        CalibrateSpec {
            resolutions: default_resolutions(),
            suite: default_suite(),
        }
    }
}

fn default_resolutions() -> Vec<usize> {
    vec![64, 128]
}

fn default_suite() -> Vec<RingCase> {
    vec![
        RingCase {
            n: 2,
            p: 2.0,
            r1: 1.0,
            r2: std::f64::consts::E,
        },
        RingCase {
            n: 2,
            p: 1.5,
            r1: 1.0,
            r2: 2.0,
        },
        RingCase {
            n: 2,
            p: 3.0,
            r1: 1.0,
            r2: 2.0,
        },
    ]
}

fn default_dimension() -> usize {
    2
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// Everything a run needs. Which fields are required depends on the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Defaults to `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<RingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plates: Option<PlatesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<MappingSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<ModulusSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access: Option<AccessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Also write a CSV series next to the JSON report.
    #[serde(default)]
    pub csv: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fills command-dependent defaults so the embedded config is complete.
    pub fn resolve(mut self, command: Command) -> Self {
        self.command.get_or_insert(command);
        if matches!(command, Command::Kcoef | Command::Distort | Command::Dual) && self.q.is_none()
        {
            self.q = self.p;
        }
        if command == Command::Calibrate && self.calibrate.is_none() {
            self.calibrate = Some(CalibrateSpec::default());
        }
        self
    }
}

/// One schema or range violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

struct Checker {
    out: Vec<Diagnostic>,
}

impl Checker {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.out.push(Diagnostic {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn require<'a, T>(&mut self, field: &str, value: &'a Option<T>) -> Option<&'a T> {
        if value.is_none() {
            self.push(field, "is required for this command");
        }
        value.as_ref()
    }

    fn grid(&mut self, field: &str, g: &GridSpec) {
        if !(g.lo.is_finite() && g.hi.is_finite() && g.hi > g.lo) {
            self.push(
                field,
                format!("hi must exceed lo, got lo={}, hi={}", g.lo, g.hi),
            );
        }
        if g.cells == 0 {
            self.push(&format!("{field}.cells"), "must be positive");
        }
        if let Some(m) = &g.mask {
            if let Err(e) = m.validate() {
                self.push(&format!("{field}.mask"), e);
            }
        }
    }

    fn ring(&mut self, field: &str, r: &RingSpec) {
        if !(r.r1 > 0.0 && r.r1.is_finite()) {
            self.push(
                &format!("{field}.r1"),
                format!("must be positive, got {}", r.r1),
            );
        }
        if !(r.r1 < r.r2 && r.r2.is_finite()) {
            self.push(
                &format!("{field}.r1"),
                format!("r1 must be smaller than r2, got r1={}, r2={}", r.r1, r.r2),
            );
        }
    }

    fn exponents(&mut self, p: Option<f64>, q: Option<f64>) {
        if let Some(p) = p {
            if !(p > 1.0) || !p.is_finite() {
                self.push("p", format!("p must exceed 1 and be finite, got {p}"));
            }
        }
        if let Some(q) = q {
            if !(q > 1.0) || !q.is_finite() {
                self.push("q", format!("q must exceed 1 and be finite, got {q}"));
            }
            if let Some(p) = p {
                if q > p {
                    self.push(
                        "q",
                        format!("exponent ordering 1 < q <= p violated: q={q} > p={p}"),
                    );
                }
            }
        }
    }

    fn region(&mut self, field: &str, r: &RegionSpec) {
        if let Err(e) = r.validate() {
            self.push(field, e);
        }
    }
}

/// Returns every schema and range violation for running `command` with `c`,
/// without running anything.
pub fn validate(command: Command, c: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut ck = Checker { out: Vec::new() };
    if let Some(cmd) = c.command {
        if cmd != command {
            ck.push(
                "command",
                format!(
                    "config is for '{}' but '{}' was requested",
                    cmd.name(),
                    command.name()
                ),
            );
        }
    }
    if !(2..=3).contains(&c.dimension) {
        ck.push("dimension", format!("must be 2 or 3, got {}", c.dimension));
    }
    ck.exponents(c.p, c.q);
    if let Err(e) = c.solver.validate() {
        ck.push("solver", e);
    }
    if !(c.tau >= 0.0 && c.tau.is_finite()) {
        ck.push(
            "tau",
            format!("must be finite and nonnegative, got {}", c.tau),
        );
    }
    if let Some(g) = &c.grid {
        ck.grid("grid", g);
    }
    if let Some(g) = &c.image_grid {
        ck.grid("image_grid", g);
    }
    if let Some(r) = &c.ring {
        ck.ring("ring", r);
    }
    if let Some(m) = &c.mapping {
        if let Err(e) = m.validate() {
            ck.push("mapping", e);
        }
    }

    let needs_p = !matches!(command, Command::Cluster | Command::Calibrate);
    if needs_p {
        ck.require("p", &c.p);
    }
    match command {
        Command::Ring => {
            ck.require("ring", &c.ring);
        }
        Command::Cap => {
            ck.require("grid", &c.grid);
            match (&c.ring, &c.plates) {
                (None, None) => ck.push("ring", "cap needs either ring or plates"),
                (Some(_), Some(_)) => ck.push("plates", "give either ring or plates, not both"),
                (None, Some(pl)) => {
                    ck.region("plates.e", &pl.e);
                    ck.region("plates.f", &pl.f);
                }
                _ => {}
            }
        }
        Command::Kcoef => {
            ck.require("grid", &c.grid);
            ck.require("mapping", &c.mapping);
        }
        Command::Distort | Command::Dual => {
            ck.require("grid", &c.grid);
            ck.require("image_grid", &c.image_grid);
            ck.require("ring", &c.ring);
            ck.require("mapping", &c.mapping);
        }
        Command::Modulus => {
            ck.require("grid", &c.grid);
            ck.require("ring", &c.ring);
            if let Some(m) = ck.require("modulus", &c.modulus) {
                if m.curve_counts.is_empty() || m.curve_counts.contains(&0) {
                    ck.push(
                        "modulus.curve_counts",
                        "must be a nonempty list of positive counts",
                    );
                }
            }
        }
        Command::Access => {
            ck.require("grid", &c.grid);
            if let Some(a) = ck.require("access", &c.access) {
                ck.region("access.u", &a.u);
                ck.region("access.v", &a.v);
                ck.region("access.e", &a.e);
                if a.continua == 0 {
                    ck.push("access.continua", "must be positive");
                }
                if !(a.constant > 0.0 && a.constant.is_finite()) {
                    ck.push("access.constant", "must be positive");
                }
            }
        }
        Command::Cluster => {
            ck.require("grid", &c.grid);
            ck.require("mapping", &c.mapping);
            if let Some(cl) = ck.require("cluster", &c.cluster) {
                if cl.points.is_empty() {
                    ck.push("cluster.points", "must list at least one boundary point");
                }
                for (i, pt) in cl.points.iter().enumerate() {
                    if pt.len() != c.dimension || pt.iter().any(|v| !v.is_finite()) {
                        ck.push(
                            &format!("cluster.points[{i}]"),
                            format!("needs {} finite coordinates", c.dimension),
                        );
                    }
                }
                if cl.sequences == 0 || cl.depth == 0 {
                    ck.push("cluster", "sequences and depth must be positive");
                }
            }
        }
        Command::Calibrate => {
            if let Some(cal) = &c.calibrate {
                if cal.resolutions.is_empty() || cal.resolutions.contains(&0) {
                    ck.push(
                        "calibrate.resolutions",
                        "must be a nonempty list of positive cell counts",
                    );
                }
                if cal.suite.is_empty() {
                    ck.push("calibrate.suite", "must not be empty");
                }
                for (i, r) in cal.suite.iter().enumerate() {
                    let f = format!("calibrate.suite[{i}]");
                    if !(2..=3).contains(&r.n) {
                        ck.push(&f, "n must be 2 or 3");
                    }
                    if !(r.p > 1.0) {
                        ck.push(&f, "p must exceed 1");
                    }
                    if !(0.0 < r.r1 && r.r1 < r.r2) {
                        ck.push(&f, "r1 must be smaller than r2 (and positive)");
                    }
                }
            }
        }
    }
    ck.out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"dimension": 2, "p": 2, "ring": {"r1": 1, "r2": 2.718281828459045}}"#,
        )
        .unwrap()
    }

    #[test]
    fn valid_config_is_clean() {
        assert!(validate(Command::Ring, &ring_config()).is_empty());
    }

    #[test]
    fn p_must_exceed_one() {
        let mut c = ring_config();
        c.p = Some(1.0);
        let d = validate(Command::Ring, &c);
        assert!(
            d.iter().any(|d| d.message.contains("p must exceed 1")),
            "{d:?}"
        );
    }

    #[test]
    fn q_above_p_cites_ordering() {
        let mut c = ring_config();
        c.q = Some(3.0);
        let d = validate(Command::Ring, &c);
        assert!(d
            .iter()
            .any(|d| d.field == "q" && d.message.contains("ordering")));
    }

    #[test]
    fn bad_ring_names_the_field() {
        let mut c = ring_config();
        c.ring.as_mut().unwrap().r1 = 3.0;
        let d = validate(Command::Ring, &c);
        assert!(d.iter().any(|d| d.field == "ring.r1"));
    }

    #[test]
    fn missing_pieces_are_listed() {
        let d = validate(Command::Distort, &ring_config());
        let fields: Vec<&str> = d.iter().map(|d| d.field.as_str()).collect();
        assert_eq!(fields, ["grid", "image_grid", "mapping"]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"p": 2, "radius": 3}"#).is_err());
    }

    #[test]
    fn resolve_fills_defaults() {
        let c = ring_config().resolve(Command::Kcoef);
        assert_eq!(c.q, Some(2.0));
        let c = ring_config().resolve(Command::Calibrate);
        assert_eq!(c.calibrate.unwrap().resolutions, vec![64, 128]);
    }
}
