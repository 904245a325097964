use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Location, ProblemSpec};

use super::rng::{path_rng, PathRng};
use super::step::Stepper;
use super::{SimConfig, TruncationPolicy};

/// Hooks called while a path advances.
pub(crate) trait Observer {
    /// Called before each substep of length `dt` leaving `x` at time `t`.
    fn on_step(&mut self, _t: f64, _x: &[f64], _dt: f64, _stepper: &mut Stepper) -> Result<()> {
        Ok(())
    }
    /// Called once per requested checkpoint; `x` is `None` once the path
    /// has been absorbed.
    fn on_checkpoint(&mut self, _index: usize, _t: f64, _x: Option<&[f64]>, _stepper: &mut Stepper) -> Result<()> {
        Ok(())
    }
}

/// How a simulated path ended.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnd {
    /// First post-step time outside the domain, `+inf` if the path survived
    /// the horizon.
    pub lifetime: f64,
    /// Exit happened through the truncation box rather than `dOmega`.
    pub truncated: bool,
    /// State at the horizon for surviving paths.
    pub terminal: Option<Vec<f64>>,
    /// First recorded point outside the domain.
    pub exit_point: Option<Vec<f64>>,
}

impl PathEnd {
    pub fn survived(&self) -> bool {
        self.terminal.is_some()
    }
}

fn check_start(x0: &[f64], spec: &ProblemSpec) -> Result<()> {
    if x0.len() != spec.dim() {
        return Err(Error::Shape(format!("start point has dimension {}", x0.len())));
    }
    if !spec.geometry().contains(x0) {
        return Err(Error::Precondition(format!("start point {x0:?} is outside the domain")));
    }
    if !(spec.rho(x0) > 0.0) {
        return Err(Error::Precondition(format!(
            "start point {x0:?} lies on the zero set of the density"
        )));
    }
    Ok(())
}

/// Advances one path to `min(horizon, lifetime)`, stopping exactly at every
/// checkpoint (sorted, within `[0, horizon]`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_path<O: Observer>(
    x0: &[f64],
    spec: &ProblemSpec,
    cfg: &SimConfig,
    horizon: f64,
    checkpoints: &[f64],
    rng: &mut PathRng,
    stepper: &mut Stepper,
    obs: &mut O,
) -> Result<PathEnd> {
    check_start(x0, spec)?;
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut next_cp = 0;
    while next_cp < checkpoints.len() && checkpoints[next_cp] <= 0.0 {
        obs.on_checkpoint(next_cp, 0.0, Some(&x), stepper)?;
        next_cp += 1;
    }
    while t < horizon {
        let stop = checkpoints.get(next_cp).copied().unwrap_or(horizon).min(horizon);
        let remaining = stop - t;
        let h_allowed = cfg.h.min(remaining);
        for zi in stepper.z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let h_eff = stepper.step(spec, cfg, &x, h_allowed)?;
        obs.on_step(t, &x, h_eff, stepper)?;
        let t_new = if h_eff >= remaining { stop } else { t + h_eff };
        std::mem::swap(&mut x, &mut stepper.next);
        match spec.geometry().locate(&x) {
            Location::Inside => {}
            loc => {
                for k in next_cp..checkpoints.len() {
                    obs.on_checkpoint(k, checkpoints[k], None, stepper)?;
                }
                let truncated = loc == Location::Truncated && cfg.truncation == TruncationPolicy::FlagTruncated;
                return Ok(PathEnd {
                    lifetime: t_new,
                    truncated,
                    terminal: None,
                    exit_point: Some(x),
                });
            }
        }
        t = t_new;
        while next_cp < checkpoints.len() && checkpoints[next_cp] <= t {
            obs.on_checkpoint(next_cp, t, Some(&x), stepper)?;
            next_cp += 1;
        }
    }
    debug_assert_eq!(x.len(), d);
    Ok(PathEnd {
        lifetime: f64::INFINITY,
        truncated: false,
        terminal: Some(x),
        exit_point: None,
    })
}

/// A fully recorded path. `times`/`states` cover every substep before the
/// lifetime; afterwards the path sits in the cemetery.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `+inf` if the path survived the horizon.
    pub lifetime: f64,
    pub truncated: bool,
    pub exit_point: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn is_killed(&self) -> bool {
        self.lifetime.is_finite()
    }

    /// State at a recorded time, `None` in the cemetery.
    pub fn state_at(&self, t: f64) -> Option<&[f64]> {
        if t >= self.lifetime {
            return None;
        }
        let i = self.times.partition_point(|s| *s <= t);
        (i > 0).then(|| self.states[i - 1].as_slice())
    }
}

struct Recorder {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Observer for Recorder {
    fn on_step(&mut self, t: f64, x: &[f64], _dt: f64, _s: &mut Stepper) -> Result<()> {
        self.times.push(t);
        self.states.push(x.to_vec());
        Ok(())
    }
}

/// Path number `index` of the configured seed.
pub fn simulate_path_indexed(x0: &[f64], spec: &ProblemSpec, config: &SimConfig, index: u64) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = path_rng(config.seed, index);
    let mut stepper = Stepper::new(x0.len());
    let mut rec = Recorder {
        times: Vec::new(),
        states: Vec::new(),
    };
    let end = run_path(x0, spec, config, config.horizon, &[], &mut rng, &mut stepper, &mut rec)?;
    if let Some(x) = end.terminal {
        rec.times.push(config.horizon);
        rec.states.push(x);
    }
    if rec.times.is_empty() {
        // killed on the very first step: keep the start point
        rec.times.push(0.0);
        rec.states.push(x0.to_vec());
    }
    Ok(Trajectory {
        times: rec.times,
        states: rec.states,
        lifetime: end.lifetime,
        truncated: end.truncated,
        exit_point: end.exit_point,
    })
}

/// Simulates path 0 of the configured seed up to `min(T, lifetime)`.
pub fn simulate_path(x0: &[f64], spec: &ProblemSpec, config: &SimConfig) -> Result<Trajectory> {
    simulate_path_indexed(x0, spec, config, 0)
}
