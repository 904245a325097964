//! Experiment configuration files.
//!
//! A configuration is a TOML document with the tables `[problem]`,
//! `[simulation]`, `[grid]`, `[output]` and any number of `[[job]]` entries.
//! Every key except `simulation.seed` has a default; see the README for the
//! full grammar.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use sdlab::model::{parse_density, parse_matrix, DENSITY_FAMILIES, MATRIX_FAMILIES};
use sdlab::{DomainGeometry, ProblemSpec};

use crate::families::{self, FUNCTION_FAMILIES};

pub const GEOMETRIES: &[&str] = &["box", "ball", "whole"];
pub const JOB_KINDS: &[&str] = &["simulate", "resolvent-fem", "resolvent-mc", "capacity", "verify"];
pub const VERIFY_TESTS: &[&str] = &[
    "kernel-identities",
    "symmetry",
    "martingale",
    "avoidance",
    "occupation",
    "regularity",
];

/// Every problem found while validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Geometry {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// All of `R^d`, truncated to the box `(lo, hi)`.
    Whole {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match self {
            Geometry::Box { lo, .. } | Geometry::Whole { lo, .. } => lo.len(),
            Geometry::Ball { center, .. } => center.len(),
        }
    }

    fn build(&self) -> sdlab::Result<DomainGeometry> {
        match self {
            Geometry::Box { lo, hi } => DomainGeometry::box_domain(lo.clone(), hi.clone()),
            Geometry::Ball { center, radius } => DomainGeometry::ball(center.clone(), *radius),
            Geometry::Whole { lo, hi } => DomainGeometry::whole(lo.clone(), hi.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemBlock {
    pub geometry: Geometry,
    pub matrix: String,
    pub density: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationBlock {
    pub h: f64,
    pub eta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
    pub seed: u64,
    pub substep_limit: u32,
    pub flag_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridBlock {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    pub x0: Vec<f64>,
    /// Number of full trajectories written as CSV.
    #[serde(default = "one")]
    pub trajectories: usize,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventFemJob {
    pub lambda: f64,
    pub f: String,
    #[serde(default = "solver_tol")]
    pub tol: f64,
    #[serde(default)]
    pub stiffness: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventMcJob {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub f: String,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityJob {
    pub deltas: Vec<f64>,
    /// Grid spacing; defaults to the first entry of `grid.h`.
    pub h: Option<f64>,
    /// Levels of the logarithmic cutoff probe, run when non-empty.
    #[serde(default)]
    pub eps: Vec<f64>,
    pub cutoff: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyJob {
    pub tests: Vec<String>,
    pub h: Option<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_fns")]
    pub fns: Vec<String>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_t")]
    pub symmetry_t: f64,
    #[serde(default = "default_pairs")]
    pub symmetry_pairs: usize,
    pub x: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub martingale_times: Option<Vec<f64>>,
    #[serde(default = "default_martingale_fns")]
    pub martingale_fns: Vec<String>,
    #[serde(default = "default_martingale_floor")]
    pub martingale_floor: f64,
    #[serde(default)]
    pub bias_coefficient: f64,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default = "default_avoidance_floor")]
    pub avoidance_floor: f64,
    #[serde(default = "one")]
    pub axis: usize,
    #[serde(default)]
    pub center: f64,
    #[serde(default)]
    pub widths: Vec<f64>,
    pub t_max: Option<f64>,
    pub ball_center: Option<Vec<f64>>,
    pub ball_radius: Option<f64>,
    #[serde(default = "default_lambda")]
    pub regularity_lambda: f64,
    #[serde(default = "default_fourier_count")]
    pub fourier_count: usize,
    #[serde(default = "default_max_freq")]
    pub max_freq: i32,
    #[serde(default)]
    pub indicators: Vec<String>,
    #[serde(default = "default_growth")]
    pub growth: f64,
}

fn one() -> usize {
    1
}
fn solver_tol() -> f64 {
    1e-10
}
fn default_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, 5.0]
}
fn default_times() -> Vec<f64> {
    vec![0.0, 0.05, 0.1]
}
fn default_fns() -> Vec<String> {
    vec!["sin_product".into()]
}
fn default_tau() -> f64 {
    0.01
}
fn default_budget() -> f64 {
    1e-9
}
fn default_t() -> f64 {
    0.1
}
fn default_pairs() -> usize {
    3
}
fn default_martingale_fns() -> Vec<String> {
    vec!["coord:1".into()]
}
fn default_martingale_floor() -> f64 {
    5e-3
}
fn default_avoidance_floor() -> f64 {
    0.05
}
fn default_lambda() -> f64 {
    1.0
}
fn default_fourier_count() -> usize {
    10
}
fn default_max_freq() -> i32 {
    4
}
fn default_growth() -> f64 {
    1.2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JobKind {
    Simulate(SimulateJob),
    ResolventFem(ResolventFemJob),
    ResolventMc(ResolventMcJob),
    Capacity(CapacityJob),
    Verify(Box<VerifyJob>),
}

impl JobKind {
    pub fn label(&self) -> &'static str {
        match self {
            JobKind::Simulate(_) => "simulate",
            JobKind::ResolventFem(_) => "resolvent-fem",
            JobKind::ResolventMc(_) => "resolvent-mc",
            JobKind::Capacity(_) => "capacity",
            JobKind::Verify(_) => "verify",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        match self {
            JobKind::Simulate(_) | JobKind::ResolventMc(_) => true,
            JobKind::Verify(v) => v
                .tests
                .iter()
                .any(|t| matches!(t.as_str(), "martingale" | "avoidance" | "occupation")),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSpec {
    pub name: String,
    /// Overrides `simulation.seed` for this job.
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub kind: JobKind,
}

/// A validated experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub problem: ProblemBlock,
    pub simulation: SimulationBlock,
    pub grid: GridBlock,
    pub jobs: Vec<JobSpec>,
    /// Where artifacts go; not part of the input hash.
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    spec: Option<ProblemSpec>,
}

impl ExperimentConfig {
    pub fn spec(&self) -> &ProblemSpec {
        self.spec.as_ref().expect("validated configs carry a problem")
    }

    pub fn dim(&self) -> usize {
        self.problem.geometry.dim()
    }

    /// Hölder exponent `1 - d/p`.
    pub fn beta(&self) -> f64 {
        self.spec().beta()
    }

    pub fn seed_of(&self, job: &JobSpec) -> u64 {
        job.seed.unwrap_or(self.simulation.seed)
    }
}

/// Collects errors while reading tables.
struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn table(&mut self, root: &mut Table, key: &str) -> Table {
        match root.remove(key) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => {
                self.errors.push(format!("'{key}' must be a table"));
                Table::new()
            }
        }
    }

    fn get<T: DeserializeOwned>(&mut self, t: &mut Table, section: &str, key: &str) -> Option<T> {
        let v = t.remove(key)?;
        match v.try_into::<T>() {
            Ok(x) => Some(x),
            Err(e) => {
                self.errors.push(format!("{section}.{key}: {}", e.message().trim()));
                None
            }
        }
    }

    fn or<T: DeserializeOwned>(&mut self, t: &mut Table, section: &str, key: &str, default: T) -> T {
        self.get(t, section, key).unwrap_or(default)
    }

    fn leftovers(&mut self, t: &Table, section: &str) {
        for k in t.keys() {
            self.errors.push(format!("{section}: unknown key '{k}'"));
        }
    }

    fn positive(&mut self, what: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.errors.push(format!("{what} must be positive, got {v}"));
        }
    }
}

fn problem(r: &mut Reader, mut t: Table) -> ProblemBlock {
    let shape: String = r.or(&mut t, "problem", "geometry", "box".to_string());
    let geometry = match shape.as_str() {
        "ball" => {
            let center = r.or(&mut t, "problem", "center", vec![0.0, 0.0]);
            let radius = r.or(&mut t, "problem", "radius", 1.0);
            Geometry::Ball { center, radius }
        }
        "whole" => Geometry::Whole {
            lo: r.or(&mut t, "problem", "lo", vec![-4.0, -4.0]),
            hi: r.or(&mut t, "problem", "hi", vec![4.0, 4.0]),
        },
        other => {
            if other != "box" {
                r.errors.push(format!(
                    "problem.geometry: unknown geometry '{other}'; known: {}",
                    GEOMETRIES.join(", ")
                ));
            }
            Geometry::Box {
                lo: r.or(&mut t, "problem", "lo", vec![0.0, 0.0]),
                hi: r.or(&mut t, "problem", "hi", vec![1.0, 1.0]),
            }
        }
    };
    let block = ProblemBlock {
        geometry,
        matrix: r.or(&mut t, "problem", "matrix", "identity".to_string()),
        density: r.or(&mut t, "problem", "density", "const".to_string()),
        p: r.or(&mut t, "problem", "p", 4.0),
    };
    r.leftovers(&t, "problem");
    block
}

fn simulation(r: &mut Reader, mut t: Table) -> SimulationBlock {
    let seed: Option<i64> = r.get(&mut t, "simulation", "seed");
    let seed = match seed {
        Some(s) if s >= 0 => s as u64,
        Some(s) => {
            r.errors.push(format!("simulation.seed must be nonnegative, got {s}"));
            0
        }
        None => {
            if !r.errors.iter().any(|e| e.starts_with("simulation.seed")) {
                r.errors.push("simulation.seed is required".into());
            }
            0
        }
    };
    let block = SimulationBlock {
        h: r.or(&mut t, "simulation", "h", 1e-3),
        eta: r.or(&mut t, "simulation", "eta", 0.05),
        horizon: r.or(&mut t, "simulation", "T", 1.0),
        n: r.or(&mut t, "simulation", "n", 10_000),
        seed,
        substep_limit: r.or(&mut t, "simulation", "substep_limit", 1000),
        flag_truncated: r.or(&mut t, "simulation", "flag_truncated", true),
    };
    r.leftovers(&t, "simulation");
    r.positive("simulation.h", block.h);
    r.positive("simulation.eta", block.eta);
    r.positive("simulation.T", block.horizon);
    if block.n == 0 {
        r.errors.push("simulation.n must be at least 1".into());
    }
    if block.substep_limit == 0 {
        r.errors.push("simulation.substep_limit must be at least 1".into());
    }
    block
}

fn job(r: &mut Reader, index: usize, value: Value) -> Option<JobSpec> {
    let section = format!("job[{index}]");
    let Value::Table(mut t) = value else {
        r.errors.push(format!("{section} must be a table"));
        return None;
    };
    let kind: Option<String> = r.get(&mut t, &section, "kind");
    let name: String = r.or(&mut t, &section, "name", String::new());
    let seed: Option<i64> = r.get(&mut t, &section, "seed");
    let Some(kind) = kind else {
        r.errors
            .push(format!("{section}: missing 'kind' (one of {})", JOB_KINDS.join(", ")));
        return None;
    };
    if seed.is_some_and(|s| s < 0) {
        r.errors.push(format!("{section}.seed must be nonnegative"));
    }
    fn body<T: DeserializeOwned>(r: &mut Reader, section: &str, t: Table) -> Option<T> {
        match Value::Table(t).try_into::<T>() {
            Ok(x) => Some(x),
            Err(e) => {
                r.errors.push(format!("{section}: {}", e.message().trim()));
                None
            }
        }
    }
    let kind = match kind.as_str() {
        "simulate" => JobKind::Simulate(body(r, &section, t)?),
        "resolvent-fem" => JobKind::ResolventFem(body(r, &section, t)?),
        "resolvent-mc" => JobKind::ResolventMc(body(r, &section, t)?),
        "capacity" => JobKind::Capacity(body(r, &section, t)?),
        "verify" => JobKind::Verify(Box::new(body(r, &section, t)?)),
        other => {
            r.errors.push(format!(
                "{section}: unknown job kind '{other}'; did you mean '{}'? known: {}",
                families::closest(other, JOB_KINDS),
                JOB_KINDS.join(", ")
            ));
            return None;
        }
    };
    let name = if name.is_empty() {
        format!("{index:02}-{}", kind.label())
    } else {
        name
    };
    Some(JobSpec {
        name,
        seed: seed.filter(|s| *s >= 0).map(|s| s as u64),
        kind,
    })
}

fn check_point(r: &mut Reader, what: &str, x: &[f64], d: usize) {
    if x.len() != d {
        r.errors.push(format!(
            "{what} has {} coordinates, the domain has dimension {d}",
            x.len()
        ));
    }
}

fn check_fn(r: &mut Reader, what: &str, s: &str, grid: &GridBlock) {
    if let Err(e) = families::parse_function(s, &grid.lo, &grid.hi) {
        r.errors.push(format!("{what}: {e}"));
    }
}

fn check_job(r: &mut Reader, job: &JobSpec, grid: &GridBlock) {
    let d = grid.lo.len();
    let s = &job.name;
    match &job.kind {
        JobKind::Simulate(j) => check_point(r, &format!("{s}.x0"), &j.x0, d),
        JobKind::ResolventFem(j) => {
            r.positive(&format!("{s}.lambda"), j.lambda);
            r.positive(&format!("{s}.tol"), j.tol);
            check_fn(r, &format!("{s}.f"), &j.f, grid);
        }
        JobKind::ResolventMc(j) => {
            check_point(r, &format!("{s}.x"), &j.x, d);
            r.positive(&format!("{s}.lambda"), j.lambda);
            check_fn(r, &format!("{s}.f"), &j.f, grid);
        }
        JobKind::Capacity(j) => {
            if !j.eps.is_empty() && j.cutoff.is_none() {
                r.errors.push(format!("{s}: 'eps' needs a 'cutoff' function"));
            }
            if let Some(c) = &j.cutoff {
                check_fn(r, &format!("{s}.cutoff"), c, grid);
            }
        }
        JobKind::Verify(j) => {
            if j.tests.is_empty() {
                r.errors.push(format!("{s}.tests must name at least one test"));
            }
            for t in &j.tests {
                if !VERIFY_TESTS.contains(&t.as_str()) {
                    r.errors.push(format!(
                        "{s}.tests: unknown test '{t}'; did you mean '{}'? known: {}",
                        families::closest(t, VERIFY_TESTS),
                        VERIFY_TESTS.join(", ")
                    ));
                }
            }
            for f in j.fns.iter().chain(&j.martingale_fns).chain(&j.indicators) {
                check_fn(r, &format!("{s}.fns"), f, grid);
            }
            let needs_x = j
                .tests
                .iter()
                .any(|t| matches!(t.as_str(), "martingale" | "avoidance" | "occupation"));
            match &j.x {
                Some(x) => check_point(r, &format!("{s}.x"), x, d),
                None if needs_x => r.errors.push(format!("{s}: stochastic tests need a start point 'x'")),
                None => {}
            }
            if j.tests.iter().any(|t| t == "regularity") && (j.ball_center.is_none() || j.ball_radius.is_none()) {
                r.errors.push(format!(
                    "{s}: the regularity test needs 'ball_center' and 'ball_radius'"
                ));
            }
            if j.axis == 0 || j.axis > d {
                r.errors.push(format!("{s}.axis must lie in 1..={d}"));
            }
        }
    }
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("syntax: {}", e.message().trim())]))?;
    let mut r = Reader { errors: Vec::new() };
    let pt = r.table(&mut root, "problem");
    let st = r.table(&mut root, "simulation");
    let mut gt = r.table(&mut root, "grid");
    let mut ot = r.table(&mut root, "output");
    let jobs_raw = match root.remove("job") {
        None => Vec::new(),
        Some(Value::Array(a)) => a,
        Some(_) => {
            r.errors.push("'job' must be an array of tables ([[job]])".into());
            Vec::new()
        }
    };
    r.leftovers(&root, "top level");

    let problem = problem(&mut r, pt);
    let simulation = simulation(&mut r, st);
    let d = problem.geometry.dim();

    let mut spec = None;
    if d < 2 {
        r.errors
            .push(format!("the domain must have dimension at least 2, got {d}"));
    } else if !(problem.p > d as f64) || !problem.p.is_finite() {
        r.errors.push(format!(
            "admissibility condition violated: p must exceed d (p = {}, d = {d})",
            problem.p
        ));
    }
    let density = parse_density(&problem.density).map_err(|e| r.errors.push(format!("problem.density: {}", strip(e))));
    let matrix = parse_matrix(&problem.matrix, d).map_err(|e| r.errors.push(format!("problem.matrix: {}", strip(e))));
    let geometry = problem
        .geometry
        .build()
        .map_err(|e| r.errors.push(format!("problem.geometry: {}", strip(e))));
    if let (Ok(g), Ok(m), Ok(rho)) = (geometry, matrix, density) {
        if r.errors.is_empty() {
            match ProblemSpec::new(g, m, rho, problem.p) {
                Ok(s) => spec = Some(s),
                Err(e) => r.errors.push(format!("problem: {}", strip(e))),
            }
        }
    }

    let (blo, bhi) = match &problem.geometry {
        Geometry::Box { lo, hi } | Geometry::Whole { lo, hi } => (lo.clone(), hi.clone()),
        Geometry::Ball { center, radius } => (
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        ),
    };
    let grid = GridBlock {
        lo: r.or(&mut gt, "grid", "lo", blo),
        hi: r.or(&mut gt, "grid", "hi", bhi),
        h: r.or(&mut gt, "grid", "h", vec![1.0 / 32.0]),
    };
    r.leftovers(&gt, "grid");
    if grid.lo.len() != d || grid.hi.len() != d {
        r.errors.push(format!("grid.lo and grid.hi must have {d} coordinates"));
    }
    if grid.h.is_empty() {
        r.errors.push("grid.h must list at least one spacing".into());
    }
    for h in &grid.h {
        r.positive("grid.h", *h);
    }

    let output_dir: String = r.or(&mut ot, "output", "dir", "sdlab-out".to_string());
    r.leftovers(&ot, "output");

    let mut jobs = Vec::new();
    for (i, v) in jobs_raw.into_iter().enumerate() {
        if let Some(j) = job(&mut r, i, v) {
            jobs.push(j);
        }
    }
    let mut names = BTreeSet::new();
    for j in &jobs {
        if !j
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            r.errors.push(format!(
                "job name '{}' may only contain letters, digits, '-' and '_'",
                j.name
            ));
        }
        if !names.insert(j.name.clone()) {
            r.errors.push(format!("duplicate job name '{}'", j.name));
        }
        if grid.lo.len() == d && grid.hi.len() == d {
            check_job(&mut r, j, &grid);
        }
    }

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }
    Ok(ExperimentConfig {
        problem,
        simulation,
        grid,
        jobs,
        output_dir: PathBuf::from(output_dir),
        spec,
    })
}

fn strip(e: sdlab::Error) -> String {
    match e {
        sdlab::Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Names of all built-in families, for `list-families`.
pub fn family_listing() -> Vec<(&'static str, &'static [&'static str])> {
    vec![
        ("geometry", GEOMETRIES),
        ("density", DENSITY_FAMILIES),
        ("matrix", MATRIX_FAMILIES),
        ("function", FUNCTION_FAMILIES),
        ("job", JOB_KINDS),
        ("verify test", VERIFY_TESTS),
    ]
}
