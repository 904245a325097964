use serde::{Deserialize, Serialize};

use crate::accum::Moments;
use crate::error::{Error, Result};
use crate::form::{evolve_semigroup_with, CgOptions, DiscreteField, DiscreteForm};
use crate::model::{CoefScratch, ProblemSpec, ScalarFn};
use crate::sde::{simulate_batch_with, BatchPlan, PathFunctional, SimConfig};

use super::mc::{check_start, Sampling};

/// Running trapezoid sum of `int Lu(X_s) ds` on the step partition (with
/// `Lu = 0` in the cemetery) plus, at each checkpoint, `M_t = u(X_t) - u(x) - int_0^t Lu(X_s) ds`, the state and `u`
/// at the state (zeros in the cemetery).
const HEAD: usize = 3;

struct MartingaleFunctional<'a> {
    u: &'a ScalarFn,
    spec: &'a ProblemSpec,
    n_times: usize,
    dim: usize,
}

impl MartingaleFunctional<'_> {
    fn stride(&self) -> usize {
        self.dim + 2
    }
}

impl PathFunctional for MartingaleFunctional<'_> {
    fn width(&self) -> usize {
        HEAD + self.n_times * self.stride()
    }

    fn init(&self, x0: &[f64], state: &mut [f64]) {
        state[1] = self.u.value(x0);
    }

    fn on_step(&self, _t: f64, x: &[f64], dt: f64, state: &mut [f64], ws: &mut CoefScratch) -> Result<()> {
        // state[2] holds the half-width of the previous step, still owed its right endpoint
        state[0] += (state[2] + 0.5 * dt) * self.spec.generator(self.u, x, ws)?;
        state[2] = 0.5 * dt;
        Ok(())
    }

    fn on_checkpoint(
        &self,
        index: usize,
        _t: f64,
        x: Option<&[f64]>,
        state: &mut [f64],
        ws: &mut CoefScratch,
    ) -> Result<()> {
        let base = HEAD + index * self.stride();
        let ux = x.map_or(0.0, |x| self.u.value(x));
        let owed = match x {
            Some(x) if state[2] > 0.0 => state[2] * self.spec.generator(self.u, x, ws)?,
            _ => 0.0,
        };
        state[base] = ux - state[1] - state[0] - owed;
        for k in 0..self.dim {
            state[base + 1 + k] = x.map_or(0.0, |x| x[k]);
        }
        state[base + 1 + self.dim] = ux;
        Ok(())
    }
}

/// Per-path martingale statistics at a list of times.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePaths {
    pub times: Vec<f64>,
    pub dim: usize,
    pub truncated_frac: f64,
    rows: Vec<Vec<f64>>,
}

impl MartingalePaths {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    fn at(&self, path: usize, time: usize, k: usize) -> f64 {
        self.rows[path][HEAD + time * (self.dim + 2) + k]
    }

    /// `M_{t_i}` along every path.
    pub fn martingale(&self, time: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n()).map(move |p| self.at(p, time, 0))
    }

    /// Coordinate `k` of `X_{t_i}` (zero after absorption).
    pub fn coord(&self, time: usize, k: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n()).map(move |p| self.at(p, time, 1 + k))
    }

    /// `u(X_{t_i})` (zero after absorption).
    pub fn u_value(&self, time: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n()).map(move |p| self.at(p, time, 1 + self.dim))
    }
}

/// Simulates the martingale statistic of `u` at every time in `times`
/// (increasing, positive).
pub fn martingale_paths(
    x: &[f64],
    times: &[f64],
    u: &ScalarFn,
    sampling: Sampling,
    spec: &ProblemSpec,
    config: &SimConfig,
) -> Result<MartingalePaths> {
    check_start(x, spec)?;
    if !u.has_derivatives() {
        return Err(Error::Config("test function has no analytic generator".into()));
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(
            "martingale times must be nonnegative and increasing".into(),
        ));
    }
    let functional = MartingaleFunctional {
        u,
        spec,
        n_times: times.len(),
        dim: x.len(),
    };
    let plan = BatchPlan {
        horizon: Some(*times.last().unwrap_or(&0.0)),
        checkpoints: times.to_vec(),
        first_path: sampling.first_path,
    };
    let batch = simulate_batch_with(x, sampling.n, spec, config, &plan, &[&functional], sampling.exec)?;
    Ok(MartingalePaths {
        times: times.to_vec(),
        dim: x.len(),
        truncated_frac: batch.truncated_frac(),
        rows: batch.paths.into_iter().map(|p| p.values).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynkinStat {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub truncated_frac: f64,
}

/// Batch mean and standard error of `M_t = u(X_t) - u(x) - int_0^t Lu(X_s) ds`.
pub fn dynkin_stat(
    x: &[f64],
    t: f64,
    u: &ScalarFn,
    n: usize,
    spec: &ProblemSpec,
    config: &SimConfig,
) -> Result<DynkinStat> {
    dynkin_stat_with(x, t, u, Sampling::new(n), spec, config)
}

pub fn dynkin_stat_with(
    x: &[f64],
    t: f64,
    u: &ScalarFn,
    sampling: Sampling,
    spec: &ProblemSpec,
    config: &SimConfig,
) -> Result<DynkinStat> {
    let paths = martingale_paths(x, &[t], u, sampling, spec, config)?;
    let m: Moments = paths.martingale(0).collect();
    Ok(DynkinStat {
        mean: m.mean(),
        se: m.std_err(),
        n: paths.n(),
        truncated_frac: paths.truncated_frac,
    })
}

/// Grid counterpart: `|P_t u(x) - u(x) - sum_k tau P_{k tau} Lu(x)|` with
/// implicit Euler steps `tau = t / steps` and `Lu` evaluated analytically at
/// the nodes.
pub fn dynkin_fem_residual(
    form: &DiscreteForm,
    spec: &ProblemSpec,
    u: &ScalarFn,
    x: &[f64],
    t: f64,
    steps: usize,
    opts: &CgOptions,
) -> Result<f64> {
    if !u.has_derivatives() {
        return Err(Error::Config("test function has no analytic generator".into()));
    }
    let grid = form.grid();
    let slot = grid
        .node_at(x)
        .and_then(|n| grid.interior_slot(n))
        .ok_or_else(|| Error::domain(x, "evaluation point is not an interior grid node"))?;
    let mut ws = CoefScratch::new(grid.dim());
    let mut lu = Vec::with_capacity(grid.n_interior());
    for &n in grid.interior_nodes() {
        lu.push(spec.generator(u, &grid.node_coords(n), &mut ws)?);
    }
    let mut lu = DiscreteField::from_values(grid, lu)?;
    let u0 = DiscreteField::sample(grid, u);
    let ut = evolve_semigroup_with(form, t, &u0, steps, opts)?;
    let tau = t / steps as f64;
    let mut integral = 0.0;
    for _ in 0..steps {
        lu = evolve_semigroup_with(form, tau, &lu, 1, opts)?;
        integral += tau * lu.values()[slot];
    }
    Ok((ut.values()[slot] - u0.values()[slot] - integral).abs())
}
