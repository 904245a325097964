use crate::accum::Moments;
use crate::error::{Error, Result};
use crate::model::{CoefScratch, DensityField, ProblemSpec};
use crate::par::{self, Exec};

use super::path::{run_path, Observer, PathEnd};
use super::rng::path_rng;
use super::step::Stepper;
use super::SimConfig;

/// A per-path statistic accumulated while the path advances. Each
/// functional owns `width()` consecutive slots of the path's value vector.
pub trait PathFunctional: Sync {
    fn width(&self) -> usize {
        1
    }
    fn init(&self, _x0: &[f64], _state: &mut [f64]) {}
    /// Substep of length `dt` leaving `x` at time `t`.
    fn on_step(&self, _t: f64, _x: &[f64], _dt: f64, _state: &mut [f64], _ws: &mut CoefScratch) -> Result<()> {
        Ok(())
    }
    /// `x` is `None` after absorption (functions are extended by zero there).
    fn on_checkpoint(
        &self,
        _index: usize,
        _t: f64,
        _x: Option<&[f64]>,
        _state: &mut [f64],
        _ws: &mut CoefScratch,
    ) -> Result<()> {
        Ok(())
    }
    fn finish(&self, _end: &PathEnd, _state: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

struct FunctionalObserver<'a> {
    fs: &'a [&'a dyn PathFunctional],
    offsets: Vec<usize>,
    state: Vec<f64>,
}

impl<'a> FunctionalObserver<'a> {
    fn new(fs: &'a [&'a dyn PathFunctional], x0: &[f64]) -> Self {
        let mut offsets = Vec::with_capacity(fs.len() + 1);
        let mut total = 0;
        for f in fs {
            offsets.push(total);
            total += f.width();
        }
        offsets.push(total);
        let mut state = vec![0.0; total];
        for (k, f) in fs.iter().enumerate() {
            f.init(x0, &mut state[offsets[k]..offsets[k + 1]]);
        }
        Self { fs, offsets, state }
    }
}

impl Observer for FunctionalObserver<'_> {
    fn on_step(&mut self, t: f64, x: &[f64], dt: f64, s: &mut Stepper) -> Result<()> {
        for (k, f) in self.fs.iter().enumerate() {
            f.on_step(
                t,
                x,
                dt,
                &mut self.state[self.offsets[k]..self.offsets[k + 1]],
                &mut s.scratch,
            )?;
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, index: usize, t: f64, x: Option<&[f64]>, s: &mut Stepper) -> Result<()> {
        for (k, f) in self.fs.iter().enumerate() {
            f.on_checkpoint(
                index,
                t,
                x,
                &mut self.state[self.offsets[k]..self.offsets[k + 1]],
                &mut s.scratch,
            )?;
        }
        Ok(())
    }
}

/// Horizon, checkpoints and stream offset for a batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchPlan {
    /// Overrides the configured horizon.
    pub horizon: Option<f64>,
    /// Sorted times in `[0, horizon]` where paths stop exactly.
    pub checkpoints: Vec<f64>,
    /// Index of the first path's stream.
    pub first_path: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    /// State at the horizon, `None` for the cemetery.
    pub terminal: Option<Vec<f64>>,
    pub lifetime: f64,
    pub truncated: bool,
    /// Functional outputs, concatenated in request order.
    pub values: Vec<f64>,
}

/// Merge-able accumulators over a batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchStats {
    pub survived: u64,
    pub truncated: u64,
    /// `min(lifetime, horizon)`.
    pub time_alive: Moments,
    /// `X_T,i` with the cemetery counted as zero.
    pub coords: Vec<Moments>,
    pub values: Vec<Moments>,
}

impl BatchStats {
    fn push(&mut self, p: &PathSummary, horizon: f64, d: usize) {
        if self.coords.is_empty() {
            self.coords = vec![Moments::new(); d];
            self.values = vec![Moments::new(); p.values.len()];
        }
        self.survived += u64::from(p.terminal.is_some());
        self.truncated += u64::from(p.truncated);
        self.time_alive.push(p.lifetime.min(horizon));
        for i in 0..d {
            self.coords[i].push(p.terminal.as_ref().map_or(0.0, |x| x[i]));
        }
        for (m, v) in self.values.iter_mut().zip(&p.values) {
            m.push(*v);
        }
    }

    pub fn merge(&mut self, other: &BatchStats) {
        if self.coords.is_empty() {
            *self = other.clone();
            return;
        }
        self.survived += other.survived;
        self.truncated += other.truncated;
        self.time_alive.merge(&other.time_alive);
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            a.merge(b);
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.merge(b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub x0: Vec<f64>,
    pub seed: u64,
    pub first_path: u64,
    pub horizon: f64,
    pub paths: Vec<PathSummary>,
    pub stats: BatchStats,
}

impl TrajectoryBatch {
    pub fn n(&self) -> usize {
        self.paths.len()
    }

    pub fn survival_frac(&self) -> f64 {
        self.stats.survived as f64 / self.n() as f64
    }

    pub fn truncated_frac(&self) -> f64 {
        self.stats.truncated as f64 / self.n() as f64
    }

    /// Values of functional slot `slot` across the paths.
    pub fn column(&self, slot: usize) -> impl Iterator<Item = f64> + '_ {
        self.paths.iter().map(move |p| p.values[slot])
    }

    /// Appends a batch simulated on the directly following streams.
    pub fn merge(mut self, other: TrajectoryBatch) -> Result<TrajectoryBatch> {
        if self.x0 != other.x0 || self.seed != other.seed || self.horizon != other.horizon {
            return Err(Error::Shape("batches differ in start point, seed or horizon".into()));
        }
        if other.first_path != self.first_path + self.n() as u64 {
            return Err(Error::Shape(format!(
                "batch streams are not contiguous: {} + {} != {}",
                self.first_path,
                self.n(),
                other.first_path
            )));
        }
        self.stats.merge(&other.stats);
        self.paths.extend(other.paths);
        Ok(self)
    }
}

/// Simulates `n` paths from `x0` with streams `first_path..first_path+n`
/// and evaluates the requested functionals on each.
pub fn simulate_batch_with(
    x0: &[f64],
    n: usize,
    spec: &ProblemSpec,
    config: &SimConfig,
    plan: &BatchPlan,
    functionals: &[&dyn PathFunctional],
    exec: Exec,
) -> Result<TrajectoryBatch> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Precondition("batch size must be at least 1".into()));
    }
    let horizon = plan.horizon.unwrap_or(config.horizon);
    if !(horizon >= 0.0) {
        return Err(Error::Config(format!("negative horizon {horizon}")));
    }
    let cps = &plan.checkpoints;
    if cps.windows(2).any(|w| !(w[0] < w[1])) || cps.iter().any(|c| !(*c >= 0.0 && *c <= horizon)) {
        return Err(Error::Config(
            "checkpoints must be increasing and lie in [0, horizon]".into(),
        ));
    }
    let d = x0.len();
    let paths = par::try_map_range(exec, n, |i| {
        let mut rng = path_rng(config.seed, plan.first_path + i as u64);
        let mut stepper = Stepper::new(d);
        let mut obs = FunctionalObserver::new(functionals, x0);
        let end = run_path(x0, spec, config, horizon, cps, &mut rng, &mut stepper, &mut obs)?;
        for (k, f) in functionals.iter().enumerate() {
            f.finish(&end, &mut obs.state[obs.offsets[k]..obs.offsets[k + 1]])?;
        }
        Ok::<_, Error>(PathSummary {
            terminal: end.terminal,
            lifetime: end.lifetime,
            truncated: end.truncated,
            values: obs.state,
        })
    })?;
    let mut stats = BatchStats::default();
    for p in &paths {
        stats.push(p, horizon, d);
    }
    Ok(TrajectoryBatch {
        x0: x0.to_vec(),
        seed: config.seed,
        first_path: plan.first_path,
        horizon,
        paths,
        stats,
    })
}

/// `n` paths on streams `0..n` up to the configured horizon.
pub fn simulate_batch(x0: &[f64], n: usize, spec: &ProblemSpec, config: &SimConfig) -> Result<TrajectoryBatch> {
    simulate_batch_with(x0, n, spec, config, &BatchPlan::default(), &[], Exec::default())
}

/// Fraction of `[0, t_max]` spent in a region before absorption, measured by
/// summing effective steps whose left state lies in the region.
pub struct Occupation<'a> {
    pub region: &'a (dyn Fn(&[f64]) -> bool + Sync),
    pub t_max: f64,
}

impl PathFunctional for Occupation<'_> {
    fn on_step(&self, t: f64, x: &[f64], dt: f64, state: &mut [f64], _ws: &mut CoefScratch) -> Result<()> {
        if t < self.t_max && (self.region)(x) {
            state[0] += dt.min(self.t_max - t);
        }
        Ok(())
    }

    fn finish(&self, _end: &PathEnd, state: &mut [f64]) -> Result<()> {
        state[0] /= self.t_max;
        Ok(())
    }
}

/// Smallest density value seen along the path (step states and the state at
/// the horizon).
pub struct MinDensity<'a> {
    pub density: &'a DensityField,
}

impl PathFunctional for MinDensity<'_> {
    fn init(&self, x0: &[f64], state: &mut [f64]) {
        state[0] = self.density.value(x0);
    }

    fn on_step(&self, _t: f64, x: &[f64], _dt: f64, state: &mut [f64], _ws: &mut CoefScratch) -> Result<()> {
        state[0] = state[0].min(self.density.value(x));
        Ok(())
    }

    fn finish(&self, end: &PathEnd, state: &mut [f64]) -> Result<()> {
        if let Some(x) = &end.terminal {
            state[0] = state[0].min(self.density.value(x));
        }
        Ok(())
    }
}

/// Mean occupation fraction of `region` over `[0, t_max]` and its standard
/// error, from `n` paths on streams `0..n`.
pub fn occupation_fraction(
    x0: &[f64],
    n: usize,
    spec: &ProblemSpec,
    config: &SimConfig,
    region: &(dyn Fn(&[f64]) -> bool + Sync),
    t_max: f64,
) -> Result<(f64, f64)> {
    let occ = Occupation { region, t_max };
    let plan = BatchPlan {
        horizon: Some(t_max),
        ..BatchPlan::default()
    };
    let batch = simulate_batch_with(x0, n, spec, config, &plan, &[&occ], Exec::default())?;
    let m = &batch.stats.values[0];
    Ok((m.mean(), m.std_err()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DomainGeometry, MatrixField};

    fn brownian_box() -> ProblemSpec {
        ProblemSpec::new(
            DomainGeometry::box_domain(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            MatrixField::Identity,
            DensityField::Const(1.0),
            3.0,
        )
        .unwrap()
    }

    #[test]
    fn merge_matches_single_batch_bitwise() {
        let spec = brownian_box();
        let cfg = SimConfig::new(2e-3, 0.05, 99);
        let occ_region = |x: &[f64]| x[0] < 0.5;
        let occ = Occupation {
            region: &occ_region,
            t_max: 0.05,
        };
        let fs: [&dyn PathFunctional; 1] = [&occ];
        let plan = |first| BatchPlan {
            first_path: first,
            ..BatchPlan::default()
        };
        let whole = simulate_batch_with(&[0.4, 0.6], 300, &spec, &cfg, &plan(0), &fs, Exec::Parallel).unwrap();
        let a = simulate_batch_with(&[0.4, 0.6], 120, &spec, &cfg, &plan(0), &fs, Exec::Sequential).unwrap();
        let b = simulate_batch_with(&[0.4, 0.6], 180, &spec, &cfg, &plan(120), &fs, Exec::Parallel).unwrap();
        let merged = a.merge(b).unwrap();
        assert_eq!(merged.paths, whole.paths);
        let bits = |s: &BatchStats| {
            let mut v = vec![s.time_alive.mean().to_bits(), s.time_alive.variance().to_bits()];
            v.extend(s.coords.iter().map(|m| m.mean().to_bits()));
            v.extend(s.values.iter().map(|m| m.variance().to_bits()));
            v
        };
        assert_eq!(bits(&merged.stats), bits(&whole.stats));
        assert_eq!(merged.stats.survived, whole.stats.survived);
    }

    #[test]
    fn non_contiguous_merge_is_rejected() {
        let spec = brownian_box();
        let cfg = SimConfig::new(2e-3, 0.01, 1);
        let a = simulate_batch(&[0.5, 0.5], 10, &spec, &cfg).unwrap();
        let b = simulate_batch(&[0.5, 0.5], 10, &spec, &cfg).unwrap();
        assert!(a.merge(b).is_err());
    }

    #[test]
    fn empty_region_occupies_nothing() {
        let spec = brownian_box();
        let cfg = SimConfig::new(1e-3, 0.1, 5);
        let none = |_: &[f64]| false;
        assert_eq!(
            occupation_fraction(&[0.5, 0.5], 200, &spec, &cfg, &none, 0.1).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn whole_domain_occupation_is_mean_survival_time() {
        let spec = brownian_box();
        let cfg = SimConfig::new(1e-3, 0.1, 5);
        let all = |x: &[f64]| spec.geometry().contains(x);
        let (frac, _) = occupation_fraction(&[0.3, 0.5], 400, &spec, &cfg, &all, 0.1).unwrap();
        let batch = simulate_batch(&[0.3, 0.5], 400, &spec, &cfg).unwrap();
        assert!(frac <= 1.0);
        assert!((frac - batch.stats.time_alive.mean() / 0.1).abs() < 1e-12);
    }
}
