use crate::accum::Moments;
use crate::error::{Error, Result};
use crate::model::{CoefScratch, ProblemSpec, ScalarFn};
use crate::par::Exec;
use crate::sde::{simulate_batch_with, BatchPlan, PathFunctional, SimConfig, TrajectoryBatch};

use super::estimate::{KernelEstimate, Target};

/// Which path streams to use and how to schedule them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub n: usize,
    pub first_path: u64,
    pub exec: Exec,
}

impl Sampling {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            first_path: 0,
            exec: Exec::default(),
        }
    }

    pub fn offset(mut self, first_path: u64) -> Self {
        self.first_path = first_path;
        self
    }

    pub fn exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

/// `f_j(X_{t_k})`, zero after absorption, stored at slot `k * fs.len() + j`.
pub(crate) struct AtCheckpoints<'a> {
    pub fs: &'a [&'a ScalarFn],
    pub n_times: usize,
}

impl PathFunctional for AtCheckpoints<'_> {
    fn width(&self) -> usize {
        self.fs.len() * self.n_times
    }

    fn on_checkpoint(
        &self,
        index: usize,
        _t: f64,
        x: Option<&[f64]>,
        state: &mut [f64],
        _ws: &mut CoefScratch,
    ) -> Result<()> {
        let m = self.fs.len();
        for (j, f) in self.fs.iter().enumerate() {
            state[index * m + j] = x.map_or(0.0, |x| f.value(x));
        }
        Ok(())
    }
}

/// Left-point quadrature of `int_0^T exp(-lambda s) f(X_s) ds` along the
/// adaptive step partition.
pub(crate) struct Discounted<'a> {
    pub f: &'a ScalarFn,
    pub lambda: f64,
}

impl PathFunctional for Discounted<'_> {
    fn on_step(&self, t: f64, x: &[f64], dt: f64, state: &mut [f64], _ws: &mut CoefScratch) -> Result<()> {
        state[0] += (-self.lambda * t).exp() * self.f.value(x) * dt;
        Ok(())
    }
}

pub(crate) fn check_start(x: &[f64], spec: &ProblemSpec) -> Result<()> {
    if x.len() != spec.dim() {
        return Err(Error::Shape(format!("start point has dimension {}", x.len())));
    }
    if !spec.geometry().contains(x) {
        return Err(Error::Precondition(format!("start point {x:?} is outside the domain")));
    }
    if !(spec.rho(x) > 0.0) {
        return Err(Error::Precondition(format!(
            "start point {x:?} lies on the zero set of the density"
        )));
    }
    Ok(())
}

fn fill(est: &mut KernelEstimate, m: &Moments, batch: &TrajectoryBatch) {
    est.value = m.mean();
    est.se = m.std_err();
    est.n = batch.n();
    est.truncated_frac = batch.truncated_frac();
}

/// Estimates `P_t f_j(x)` for every time and function on one shared set of
/// paths. Result is indexed `[time][function]`.
pub fn pt_mc_many(
    x: &[f64],
    times: &[f64],
    fs: &[&ScalarFn],
    sampling: Sampling,
    spec: &ProblemSpec,
    config: &SimConfig,
) -> Result<Vec<Vec<KernelEstimate>>> {
    check_start(x, spec)?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let horizon = *times.last().unwrap_or(&0.0);
    let plan = BatchPlan {
        horizon: Some(horizon),
        checkpoints: times.to_vec(),
        first_path: sampling.first_path,
    };
    let functional = AtCheckpoints {
        fs,
        n_times: times.len(),
    };
    let batch = simulate_batch_with(x, sampling.n, spec, config, &plan, &[&functional], sampling.exec)?;
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mut row = Vec::with_capacity(fs.len());
        for (j, f) in fs.iter().enumerate() {
            let mut est = KernelEstimate::new(Target::Semigroup, x, t, config, horizon);
            if t == 0.0 {
                est.value = f.value(x);
                est.n = sampling.n;
            } else {
                fill(&mut est, &batch.stats.values[k * fs.len() + j], &batch);
            }
            row.push(est);
        }
        out.push(row);
    }
    Ok(out)
}

/// Monte Carlo estimate of `P_t f(x) = E_x[f(X_t); t < lifetime]`.
pub fn pt_mc(
    x: &[f64],
    t: f64,
    f: &ScalarFn,
    n: usize,
    spec: &ProblemSpec,
    config: &SimConfig,
) -> Result<KernelEstimate> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Precondition(format!("time must be nonnegative, got {t}")));
    }
    let mut est = pt_mc_many(x, &[t], &[f], Sampling::new(n), spec, config)?;
    Ok(est.remove(0).remove(0))
}

/// Monte Carlo estimate of `R_lambda f(x)` truncated at the configured horizon.
pub fn rlambda_mc(
    x: &[f64],
    lambda: f64,
    f: &ScalarFn,
    n: usize,
    spec: &ProblemSpec,
    config: &SimConfig,
) -> Result<KernelEstimate> {
    rlambda_mc_with(x, lambda, f, Sampling::new(n), spec, config)
}

pub fn rlambda_mc_with(
    x: &[f64],
    lambda: f64,
    f: &ScalarFn,
    sampling: Sampling,
    spec: &ProblemSpec,
    config: &SimConfig,
) -> Result<KernelEstimate> {
    check_start(x, spec)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Precondition(format!(
            "resolvent rate must be positive, got {lambda}"
        )));
    }
    let sup = f
        .sup_bound(spec.geometry().bounding_box())
        .ok_or_else(|| Error::Config("the resolvent estimator needs a function with a known sup bound".into()))?;
    let plan = BatchPlan {
        first_path: sampling.first_path,
        ..BatchPlan::default()
    };
    let functional = Discounted { f, lambda };
    let batch = simulate_batch_with(x, sampling.n, spec, config, &plan, &[&functional], sampling.exec)?;
    let mut est = KernelEstimate::new(Target::Resolvent, x, lambda, config, config.horizon);
    fill(&mut est, &batch.stats.values[0], &batch);
    est.tail_bound = Some((-lambda * config.horizon).exp() * sup / lambda);
    Ok(est)
}
