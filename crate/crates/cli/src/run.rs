use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use sdlab::capacity::{fukushima_energy, write_probe_csv, write_scan_csv, zero_set_scan_form};
use sdlab::form::{assemble, resolvent_solve, write_field_csv, write_stiffness_coo, DiscreteField, FormHeader, Grid};
use sdlab::kernels::{rlambda_mc, Sampling};
use sdlab::par::{map_range, Exec};
use sdlab::sde::{simulate_batch, simulate_path_indexed, BatchSummaryJson, SimConfig, TrajectoryCsv, TruncationPolicy};
use sdlab::verify::{
    avoidance_test, kernel_identity_test, martingale_test, occupation_test, random_fourier_batch,
    regularity_ratio_test, symmetry_test, IdentityConfig, MartingaleBudget, RegularityConfig, TestReport, Verdict,
};
use sdlab::{Error, Result, ScalarFn};

use crate::config::{
    CapacityJob, ExperimentConfig, JobKind, JobSpec, ResolventFemJob, ResolventMcJob, SimulateJob, VerifyJob,
};
use crate::families::parse_function;

/// Version of the manifest layout; bumped on any incompatible change.
pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "SDLAB_OUTPUT_ROOT";

const CG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pass,
    /// Ran to completion but a test verdict failed.
    Fail,
    /// Aborted by a module error.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub name: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub status: JobStatus,
    pub error: Option<String>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub summary: Value,
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// SHA-256 of the canonical JSON form of the validated configuration.
    pub inputs_hash: String,
    pub versions: BTreeMap<String, String>,
    pub parallel: bool,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    /// Unix time in seconds.
    pub started_at: u64,
    pub wall_time: f64,
    pub passed: bool,
    pub jobs: Vec<JobRecord>,
}

impl Manifest {
    /// Copy with timestamps and runtimes zeroed.
    pub fn without_timing(&self) -> Self {
        let mut m = self.clone();
        m.started_at = 0;
        m.wall_time = 0.0;
        for j in &mut m.jobs {
            j.runtime = 0.0;
        }
        m
    }

    pub fn job(&self, name: &str) -> Option<&JobRecord> {
        self.jobs.iter().find(|j| j.name == name)
    }
}

/// SHA-256 over the canonical JSON form of `config`. Defaults are filled in
/// and the output directory is left out, so two files describing the same
/// experiment hash equally.
pub fn inputs_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("configs serialise");
    hex::encode(Sha256::digest(&canonical))
}

/// Absolute `dir` wins; otherwise it is resolved against `root` if given,
/// else against `base` (the directory of the configuration file).
pub fn resolve_output_dir(dir: &Path, base: &Path, root: Option<&Path>) -> PathBuf {
    if dir.is_absolute() {
        dir.to_path_buf()
    } else if let Some(root) = root {
        root.join(dir)
    } else {
        base.join(dir)
    }
}

struct Outcome {
    passed: bool,
    artifacts: Vec<String>,
    summary: Value,
}

struct Sink<'a> {
    root: &'a Path,
    job: &'a str,
    artifacts: Vec<String>,
}

impl Sink<'_> {
    fn write(&mut self, file: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let dir = self.root.join(self.job);
        fs::create_dir_all(&dir)?;
        let mut w = BufWriter::new(File::create(dir.join(file))?);
        body(&mut w)?;
        w.flush()?;
        self.artifacts.push(format!("{}/{file}", self.job));
        Ok(())
    }

    fn json(&mut self, file: &str, value: &impl Serialize) -> Result<()> {
        self.write(file, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn done(self, passed: bool, summary: Value) -> Outcome {
        Outcome {
            passed,
            artifacts: self.artifacts,
            summary,
        }
    }
}

fn sim_config(cfg: &ExperimentConfig, seed: u64) -> SimConfig {
    let s = &cfg.simulation;
    SimConfig {
        h: s.h,
        eta: s.eta,
        horizon: s.horizon,
        truncation: if s.flag_truncated {
            TruncationPolicy::FlagTruncated
        } else {
            TruncationPolicy::KillAtBox
        },
        seed,
        substep_limit: s.substep_limit,
    }
}

fn grid_at(cfg: &ExperimentConfig, h: Option<f64>) -> Result<Grid> {
    let h = h.unwrap_or(cfg.grid.h[0]);
    Grid::new(cfg.spec(), cfg.grid.lo.clone(), cfg.grid.hi.clone(), h)
}

fn function(cfg: &ExperimentConfig, s: &str) -> Result<ScalarFn> {
    parse_function(s, &cfg.grid.lo, &cfg.grid.hi)
}

fn simulate(cfg: &ExperimentConfig, j: &SimulateJob, seed: u64, mut sink: Sink<'_>) -> Result<Outcome> {
    let spec = cfg.spec();
    let sim = sim_config(cfg, seed);
    for k in 0..j.trajectories {
        let tr = simulate_path_indexed(&j.x0, spec, &sim, k as u64)?;
        sink.write(&format!("path_{k}.csv"), |w| TrajectoryCsv(&tr).write(w))?;
    }
    let batch = simulate_batch(&j.x0, j.n.unwrap_or(cfg.simulation.n), spec, &sim)?;
    let summary = BatchSummaryJson::from(&batch);
    sink.json("batch.json", &summary)?;
    let brief = json!({
        "n": summary.n, "survival_frac": summary.survival_frac, "truncated_frac": summary.truncated_frac,
    });
    Ok(sink.done(true, brief))
}

fn resolvent_fem(cfg: &ExperimentConfig, j: &ResolventFemJob, mut sink: Sink<'_>) -> Result<Outcome> {
    let f = function(cfg, &j.f)?;
    let mut rows = Vec::new();
    for (i, h) in cfg.grid.h.iter().enumerate() {
        let grid = grid_at(cfg, Some(*h))?;
        let form = assemble(cfg.spec(), &grid)?;
        let u = resolvent_solve(&form, j.lambda, &DiscreteField::sample(&grid, &f), j.tol)?;
        sink.write(&format!("u_{i}.csv"), |w| write_field_csv(&grid, &u, w))?;
        sink.json(&format!("form_{i}.json"), &FormHeader::from(&form))?;
        if j.stiffness {
            sink.write(&format!("stiffness_{i}.coo"), |w| write_stiffness_coo(&form, w))?;
        }
        rows.push(json!({"h": h, "n_interior": grid.n_interior(), "max_abs": u.max_abs()}));
    }
    Ok(sink.done(true, Value::Array(rows)))
}

fn resolvent_mc(cfg: &ExperimentConfig, j: &ResolventMcJob, seed: u64, mut sink: Sink<'_>) -> Result<Outcome> {
    let f = function(cfg, &j.f)?;
    let sim = sim_config(cfg, seed);
    let est = rlambda_mc(&j.x, j.lambda, &f, j.n.unwrap_or(cfg.simulation.n), cfg.spec(), &sim)?;
    let record = json!({
        "estimate": est.record(), "h": est.h, "eta": est.eta, "horizon": est.horizon, "tail_bound": est.tail_bound,
    });
    sink.json("estimate.json", &record)?;
    Ok(sink.done(true, record))
}

fn capacity(cfg: &ExperimentConfig, j: &CapacityJob, mut sink: Sink<'_>) -> Result<Outcome> {
    let grid = grid_at(cfg, j.h)?;
    let form = assemble(cfg.spec(), &grid)?;
    let rows = zero_set_scan_form(&form, &j.deltas)?;
    sink.write("scan.csv", |w| write_scan_csv(&rows, w))?;
    let mut probe = Vec::new();
    if let Some(c) = &j.cutoff {
        let cutoff = DiscreteField::sample(&grid, &function(cfg, c)?);
        for eps in &j.eps {
            probe.push((*eps, fukushima_energy(&form, &cutoff, *eps)?));
        }
        sink.write("probe.csv", |w| write_probe_csv(&probe, w))?;
    }
    let summary = json!({
        "h": grid.h(), "scan": rows,
        "probe": probe.iter().map(|(e, v)| json!({"eps": e, "energy": v})).collect::<Vec<_>>(),
    });
    Ok(sink.done(true, summary))
}

fn verify_one(cfg: &ExperimentConfig, j: &VerifyJob, seed: u64, test: &str) -> Result<TestReport> {
    let spec = cfg.spec();
    let d = cfg.dim();
    let sim = sim_config(cfg, seed);
    let n = j.n.unwrap_or(cfg.simulation.n);
    let x = || {
        j.x.clone()
            .ok_or_else(|| Error::Config(format!("{test} needs a start point")))
    };
    let fns = |list: &[String]| list.iter().map(|s| function(cfg, s)).collect::<Result<Vec<_>>>();
    match test {
        "kernel-identities" => {
            let grid = grid_at(cfg, j.h)?;
            let form = assemble(spec, &grid)?;
            let ic = IdentityConfig {
                tau: j.tau,
                identity_tol: j.budget,
                ..IdentityConfig::default()
            };
            kernel_identity_test(spec, &form, &j.lambdas, &j.times, &fns(&j.fns)?, &ic)
        }
        "symmetry" => {
            let grid = grid_at(cfg, j.h)?;
            let form = assemble(spec, &grid)?;
            let fields: Vec<DiscreteField> = random_fourier_batch(seed, 2 * j.symmetry_pairs, d, j.max_freq)
                .iter()
                .map(|f| DiscreteField::sample(&grid, f))
                .collect();
            let pairs: Vec<_> = fields.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect();
            let steps = ((j.symmetry_t / j.tau).round() as usize).max(1);
            symmetry_test(&form, j.symmetry_t, steps, &pairs, 1e-13, j.budget)
        }
        "martingale" => {
            let times = j
                .martingale_times
                .clone()
                .unwrap_or_else(|| vec![cfg.simulation.horizon]);
            let budget = MartingaleBudget {
                c_h: j.bias_coefficient,
                floor: j.martingale_floor,
            };
            martingale_test(
                spec,
                &x()?,
                &times,
                &fns(&j.martingale_fns)?,
                Sampling::new(n),
                &sim,
                budget,
            )
        }
        "avoidance" => avoidance_test(spec, &x()?, &j.deltas, Sampling::new(n), &sim, j.avoidance_floor),
        "occupation" => {
            let t_max = j.t_max.unwrap_or(cfg.simulation.horizon);
            occupation_test(
                spec,
                &x()?,
                j.axis - 1,
                j.center,
                &j.widths,
                t_max,
                Sampling::new(n),
                &sim,
            )
        }
        "regularity" => {
            let mut batch = random_fourier_batch(seed, j.fourier_count, d, j.max_freq);
            batch.extend(fns(&j.indicators)?);
            let rc = RegularityConfig {
                lambda: j.regularity_lambda,
                ball_center: j.ball_center.clone().unwrap_or_default(),
                ball_radius: j.ball_radius.unwrap_or_default(),
                lo: cfg.grid.lo.clone(),
                hi: cfg.grid.hi.clone(),
                cg_tol: CG_TOL,
                growth: j.growth,
                exec: Exec::default(),
            };
            regularity_ratio_test(spec, &cfg.grid.h, &batch, &rc)
        }
        other => Err(Error::Config(format!("unknown test '{other}'"))),
    }
}

fn verify(cfg: &ExperimentConfig, j: &VerifyJob, seed: u64, mut sink: Sink<'_>) -> Result<Outcome> {
    let reports: Vec<TestReport> = j
        .tests
        .iter()
        .map(|t| verify_one(cfg, j, seed, t).map(|r| r.without_runtime()))
        .collect::<Result<_>>()?;
    sink.json("reports.json", &reports)?;
    let count = |v: Verdict| reports.iter().filter(|r| r.verdict == v).count();
    let failed = count(Verdict::Fail);
    let summary = json!({
        "failed": failed, "inconclusive": count(Verdict::Inconclusive), "passed": count(Verdict::Pass),
        "reports": reports,
    });
    Ok(sink.done(failed == 0, summary))
}

fn run_job(cfg: &ExperimentConfig, job: &JobSpec, out: &Path) -> JobRecord {
    let started = Instant::now();
    let seed = cfg.seed_of(job);
    let sink = Sink {
        root: out,
        job: &job.name,
        artifacts: Vec::new(),
    };
    let result = match &job.kind {
        JobKind::Simulate(j) => simulate(cfg, j, seed, sink),
        JobKind::ResolventFem(j) => resolvent_fem(cfg, j, sink),
        JobKind::ResolventMc(j) => resolvent_mc(cfg, j, seed, sink),
        JobKind::Capacity(j) => capacity(cfg, j, sink),
        JobKind::Verify(j) => verify(cfg, j, seed, sink),
    };
    let (status, error, artifacts, summary) = match result {
        Ok(o) => (
            if o.passed { JobStatus::Pass } else { JobStatus::Fail },
            None,
            o.artifacts,
            o.summary,
        ),
        Err(e) => (JobStatus::Error, Some(e.to_string()), Vec::new(), Value::Null),
    };
    JobRecord {
        name: job.name.clone(),
        kind: job.kind.label().into(),
        seed: job.kind.is_stochastic().then_some(seed),
        status,
        error,
        artifacts,
        summary,
        runtime: started.elapsed().as_secs_f64(),
    }
}

/// Runs every job, writes artifacts and `manifest.json` under `out`, and
/// returns the manifest. Jobs run independently; a failing job never stops
/// the others.
pub fn run(config: &ExperimentConfig, out: &Path) -> std::io::Result<Manifest> {
    let started = Instant::now();
    let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    fs::create_dir_all(out)?;
    let jobs = map_range(Exec::default(), config.jobs.len(), |i| {
        run_job(config, &config.jobs[i], out)
    });
    let mut versions = BTreeMap::new();
    versions.insert("sdlab".to_string(), sdlab::VERSION.to_string());
    versions.insert("sdlab-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let seeds = config
        .jobs
        .iter()
        .filter(|j| j.kind.is_stochastic())
        .map(|j| (j.name.clone(), config.seed_of(j)))
        .collect();
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA,
        inputs_hash: inputs_hash(config),
        versions,
        parallel: Exec::default().is_parallel(),
        config: serde_json::to_value(config).expect("configs serialise"),
        seeds,
        started_at,
        wall_time: started.elapsed().as_secs_f64(),
        passed: jobs.iter().all(|j| j.status == JobStatus::Pass),
        jobs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifests serialise");
    fs::write(out.join(MANIFEST_FILE), text + "\n")?;
    Ok(manifest)
}
