//! Scenario files: parsing, validation, builtin registry, and the run
//! orchestrator with its output bundle.

mod build;
mod output;
mod run;
mod tasks;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::Instance;
pub use output::{compare_numeric, round_sig, OutputBundle, RunStatus};
pub use run::{run_scenario, RunOptions};

/// Version of the scenario schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// The JSON schema shipped next to the builtin scenarios.
pub const SCHEMA: &str = include_str!("../../scenarios/scenario.schema.json");

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub manifold: ManifoldBlock,
    pub metric: MetricBlock,
    pub submanifold: SubmanifoldBlock,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    pub seed: u64,
    #[serde(default)]
    pub probes: Probes,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Cutlocus]
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldType {
    Flat,
    Torus,
    SphereStereo,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManifoldBlock {
    #[serde(rename = "type")]
    pub kind: ManifoldType,
    pub dim: usize,
    /// Torus periods, one per coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum RiemannianKind {
    Euclidean,
    RoundSphere,
    Constant,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricBlock {
    Riemannian {
        model: RiemannianKind,
        /// Row-major matrix for the `constant` model.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<f64>>,
    },
    Randers {
        /// Row-major `a`; identity when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Vec<f64>>,
        b: Vec<f64>,
    },
    MinkowskiQuartic {
        epsilon: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SubmanifoldBlock {
    Point {
        #[serde(default)]
        chart: usize,
        point: Vec<f64>,
    },
    Circle {
        #[serde(default)]
        chart: usize,
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        chart: usize,
        center: [f64; 2],
        a: f64,
        b: f64,
    },
    AxisLine {
        #[serde(default)]
        chart: usize,
        origin: Vec<f64>,
        axis: usize,
        half_length: f64,
    },
    SampledCurve {
        #[serde(default)]
        chart: usize,
        /// Rows `[θ, x1, .., xn]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<Vec<Vec<f64>>>,
        /// CSV file with columns `theta, x1, .., xn`, relative to the
        /// working directory.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<String>,
        #[serde(default)]
        closed: bool,
    },
}

impl SubmanifoldBlock {
    pub fn chart(&self) -> usize {
        match self {
            SubmanifoldBlock::Point { chart, .. }
            | SubmanifoldBlock::Circle { chart, .. }
            | SubmanifoldBlock::Ellipse { chart, .. }
            | SubmanifoldBlock::AxisLine { chart, .. }
            | SubmanifoldBlock::SampledCurve { chart, .. } => *chart,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SidesBlock {
    Both,
    Plus,
    Minus,
}

/// Ray grids. `theta_count`/`psi_count`/`sides` select the rays whose cut
/// data is reported; the fan counts set the multistart grid used for
/// distances (defaults depend on the submanifold).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default = "one")]
    pub theta_count: usize,
    #[serde(default = "default_psi_count")]
    pub psi_count: usize,
    #[serde(default = "default_sides")]
    pub sides: SidesBlock,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_levels")]
    pub refinement_levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fan_theta_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fan_psi_count: Option<usize>,
}

fn one() -> usize {
    1
}
fn default_psi_count() -> usize {
    16
}
fn default_sides() -> SidesBlock {
    SidesBlock::Both
}
fn default_horizon() -> f64 {
    2.0
}
fn default_levels() -> usize {
    2
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            theta_count: 1,
            psi_count: default_psi_count(),
            sides: SidesBlock::Both,
            horizon: default_horizon(),
            refinement_levels: default_levels(),
            fan_theta_count: None,
            fan_psi_count: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "d_ode_rel")]
    pub ode_rel: f64,
    #[serde(default = "d_ode_abs")]
    pub ode_abs: f64,
    #[serde(default = "d_newton")]
    pub newton: f64,
    #[serde(default = "d_bisection")]
    pub bisection: f64,
    #[serde(default = "d_angle")]
    pub distinct_angle: f64,
}

fn d_ode_rel() -> f64 {
    1e-9
}
fn d_ode_abs() -> f64 {
    1e-11
}
fn d_newton() -> f64 {
    1e-10
}
fn d_bisection() -> f64 {
    1e-6
}
fn d_angle() -> f64 {
    1e-3
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ode_rel: d_ode_rel(), ode_abs: d_ode_abs(), newton: d_newton(), bisection: d_bisection(), distinct_angle: d_angle() }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Validate,
    Cutlocus,
    Classify,
    Retracts,
    Dfcheck,
    Loops,
    Theorems,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Cutlocus => "cutlocus",
            Task::Classify => "classify",
            Task::Retracts => "retracts",
            Task::Dfcheck => "dfcheck",
            Task::Loops => "loops",
            Task::Theorems => "theorems",
        }
    }
}

/// Probe points for the retraction and differential checks: `count`
/// seeded uniform samples of `box` plus any explicit `points`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Probes {
    #[serde(default = "d_probe_count")]
    pub count: usize,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub chart: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    #[serde(default = "d_directions")]
    pub directions: usize,
    #[serde(default = "d_fd_step")]
    pub fd_step: f64,
    #[serde(default = "d_homotopy_steps")]
    pub homotopy_steps: usize,
    /// End point for the two-geodesics construction of the loops task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

fn d_probe_count() -> usize {
    8
}
fn d_directions() -> usize {
    8
}
fn d_fd_step() -> f64 {
    1e-5
}
fn d_homotopy_steps() -> usize {
    8
}

impl Default for Probes {
    fn default() -> Self {
        Probes {
            count: d_probe_count(),
            bounds: None,
            chart: 0,
            points: Vec::new(),
            directions: d_directions(),
            fd_step: d_fd_step(),
            homotopy_steps: d_homotopy_steps(),
            target: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DistanceCheck {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub expected: f64,
    #[serde(default = "d_check_tol")]
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NormalCheck {
    #[serde(default)]
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub expected: Vec<f64>,
    #[serde(default = "d_normal_tol")]
    pub tol: f64,
}

fn d_check_tol() -> f64 {
    1e-6
}
fn d_normal_tol() -> f64 {
    1e-8
}

/// Closed-form expectations verified by the validate task.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distances: Vec<DistanceCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normals: Vec<NormalCheck>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "d_formats")]
    pub formats: Vec<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
}

fn d_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Svg]
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { formats: d_formats(), directory: None }
    }
}

/// `a.b[2].c` → `/a/b/2/c`.
fn pointer_of(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        use serde_path_to_error::Segment;
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn config(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config { pointer: pointer.to_string(), message: message.into() }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let message = e.into_inner().to_string();
        if message.contains("unknown variant `custom`") {
            return config(&pointer, "custom metrics and submanifolds are available through the library API only");
        }
        config(&pointer, message)
    })?;
    s.validate()?;
    Ok(s)
}

impl Scenario {
    /// Semantic checks beyond the schema: positivity, dimensions, and
    /// family/manifold compatibility.
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(config("/version", format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        if self.name.trim().is_empty() {
            return Err(config("/name", "name must be nonempty"));
        }
        let n = self.manifold.dim;
        if n < 1 {
            return Err(config("/manifold/dim", "dimension must be at least 1"));
        }
        match (self.manifold.kind, &self.manifold.periods) {
            (ManifoldType::Torus, None) => return Err(config("/manifold/periods", "a torus needs periods")),
            (ManifoldType::Torus, Some(p)) => {
                if p.len() != n {
                    return Err(config("/manifold/periods", format!("expected {n} periods, got {}", p.len())));
                }
                if let Some(i) = p.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(config(&format!("/manifold/periods/{i}"), "periods must be positive"));
                }
            }
            (_, Some(_)) => return Err(config("/manifold/periods", "periods apply to tori only")),
            _ => {}
        }
        let t = &self.tolerances;
        for (key, v) in [
            ("ode_rel", t.ode_rel),
            ("ode_abs", t.ode_abs),
            ("newton", t.newton),
            ("bisection", t.bisection),
            ("distinct_angle", t.distinct_angle),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(&format!("/tolerances/{key}"), format!("tolerance must be positive, got {v}")));
            }
        }
        let g = &self.grids;
        for (key, v) in [("theta_count", g.theta_count), ("psi_count", g.psi_count)] {
            if v < 1 {
                return Err(config(&format!("/grids/{key}"), "grid counts must be at least 1"));
            }
        }
        for (key, v) in [("fan_theta_count", g.fan_theta_count), ("fan_psi_count", g.fan_psi_count)] {
            if v == Some(0) {
                return Err(config(&format!("/grids/{key}"), "grid counts must be at least 1"));
            }
        }
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            return Err(config("/grids/horizon", "horizon must be positive"));
        }
        if self.tasks.is_empty() {
            return Err(config("/tasks", "at least one task is required"));
        }
        let p = &self.probes;
        if !(p.fd_step > 0.0) {
            return Err(config("/probes/fd_step", "step must be positive"));
        }
        if let Some(b) = &p.bounds {
            if b.len() != n {
                return Err(config("/probes/box", format!("expected {n} intervals")));
            }
            if let Some(i) = b.iter().position(|iv| !(iv[0] < iv[1])) {
                return Err(config(&format!("/probes/box/{i}"), "interval must satisfy lo < hi"));
            }
        }
        if let Some(i) = p.points.iter().position(|q| q.len() != n) {
            return Err(config(&format!("/probes/points/{i}"), format!("expected {n} coordinates")));
        }
        if p.target.as_ref().is_some_and(|q| q.len() != n) {
            return Err(config("/probes/target", format!("expected {n} coordinates")));
        }
        self.validate_metric_block(n)?;
        self.validate_submanifold_block(n)?;
        if self.output.formats.is_empty() {
            return Err(config("/output/formats", "at least one format is required"));
        }
        Ok(())
    }

    fn validate_metric_block(&self, n: usize) -> Result<()> {
        let square = |m: &Vec<f64>, at: &str| -> Result<()> {
            if m.len() != n * n {
                return Err(config(at, format!("expected {} entries (row-major {n}×{n})", n * n)));
            }
            Ok(())
        };
        match &self.metric {
            MetricBlock::Riemannian { model, matrix } => match (model, matrix) {
                (RiemannianKind::Constant, None) => return Err(config("/metric/matrix", "the constant model needs a matrix")),
                (RiemannianKind::Constant, Some(m)) => square(m, "/metric/matrix")?,
                (_, Some(_)) => return Err(config("/metric/matrix", "a matrix applies to the constant model only")),
                (RiemannianKind::RoundSphere, None) if self.manifold.kind != ManifoldType::SphereStereo => {
                    return Err(config("/metric/model", "round-sphere needs the sphere-stereo manifold"))
                }
                _ => {}
            },
            MetricBlock::Randers { a, b } => {
                if let Some(a) = a {
                    square(a, "/metric/a")?;
                }
                if b.len() != n {
                    return Err(config("/metric/b", format!("expected {n} entries")));
                }
            }
            MetricBlock::MinkowskiQuartic { epsilon } => {
                if !epsilon.is_finite() {
                    return Err(config("/metric/epsilon", "epsilon must be finite"));
                }
            }
        }
        Ok(())
    }

    fn validate_submanifold_block(&self, n: usize) -> Result<()> {
        let charts = if self.manifold.kind == ManifoldType::SphereStereo { 2 } else { 1 };
        if self.submanifold.chart() >= charts {
            return Err(config("/submanifold/chart", format!("chart must be below {charts}")));
        }
        let planar = |at: &str| -> Result<()> {
            if n != 2 {
                return Err(config(at, "this family lives in a two-dimensional chart"));
            }
            Ok(())
        };
        match &self.submanifold {
            SubmanifoldBlock::Point { point, .. } => {
                if point.len() != n {
                    return Err(config("/submanifold/point", format!("expected {n} coordinates")));
                }
            }
            SubmanifoldBlock::Circle { radius, .. } => {
                planar("/submanifold/family")?;
                if !(*radius > 0.0) {
                    return Err(config("/submanifold/radius", "radius must be positive"));
                }
            }
            SubmanifoldBlock::Ellipse { a, b, .. } => {
                planar("/submanifold/family")?;
                if !(*a > 0.0) {
                    return Err(config("/submanifold/a", "semi-axis must be positive"));
                }
                if !(*b > 0.0) {
                    return Err(config("/submanifold/b", "semi-axis must be positive"));
                }
            }
            SubmanifoldBlock::AxisLine { origin, axis, half_length, .. } => {
                if origin.len() != n {
                    return Err(config("/submanifold/origin", format!("expected {n} coordinates")));
                }
                if *axis >= n {
                    return Err(config("/submanifold/axis", format!("axis must be below {n}")));
                }
                if !(*half_length > 0.0) {
                    return Err(config("/submanifold/half_length", "half length must be positive"));
                }
            }
            SubmanifoldBlock::SampledCurve { samples, csv, .. } => match (samples, csv) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(config("/submanifold", "give exactly one of samples or csv"));
                }
                (Some(rows), None) => {
                    if let Some(i) = rows.iter().position(|r| r.len() != n + 1) {
                        return Err(config(&format!("/submanifold/samples/{i}"), format!("expected {} values (theta, x1..x{n})", n + 1)));
                    }
                }
                _ => {}
            },
        }
        Ok(())
    }
}

/// Names and one-line descriptions of the shipped scenarios.
pub fn list_builtin_scenarios() -> Vec<(&'static str, &'static str)> {
    BUILTINS.iter().map(|b| (b.0, b.1)).collect()
}

/// Parses a shipped scenario by name.
pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    let b = BUILTINS.iter().find(|b| b.0 == name).ok_or_else(|| {
        let names: Vec<&str> = BUILTINS.iter().map(|b| b.0).collect();
        config("/name", format!("unknown builtin `{name}`; expected one of: {}", names.join(", ")))
    })?;
    parse_scenario(b.2)
}

/// The shipped scenario file of a builtin.
pub fn builtin_text(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|b| b.0 == name).map(|b| b.2)
}

/// The shipped golden summary of a builtin.
pub fn builtin_golden(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|b| b.0 == name).map(|b| b.3)
}

type Builtin = (&'static str, &'static str, &'static str, &'static str);

macro_rules! builtin {
    ($name:literal, $desc:literal) => {
        (
            $name,
            $desc,
            include_str!(concat!("../../scenarios/", $name, ".json")),
            include_str!(concat!("../../golden/", $name, ".json")),
        )
    };
}

const BUILTINS: [Builtin; 8] = [
    builtin!("sphere-point", "Unit round sphere, distance from a point; the cut locus is the antipode"),
    builtin!("sphere-equator", "Unit round sphere, distance from the equator; cut and focal locus are the poles"),
    builtin!("torus-point", "Flat square torus, distance from a point; the cut locus is the Voronoi cell boundary"),
    builtin!("torus-quartic-point", "Square torus with a reversible quartic Minkowski norm, distance from a point"),
    builtin!("plane-circle", "Euclidean plane, distance from the unit circle; the cut locus is the center"),
    builtin!("plane-ellipse", "Euclidean plane, distance from an ellipse; the cut locus is a segment of the major axis"),
    builtin!("randers-plane-point", "Randers plane with constant drift, distance from a point"),
    builtin!("randers-plane-axis", "Randers plane with constant drift, distance from a segment of the y-axis"),
];

#[cfg(test)]
mod tests;
