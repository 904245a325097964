//! Adaptive Euler-Maruyama simulation of the killed diffusion
//! `dX = b(X) dt + sigma(X) dW`, `sigma sigma^T = 2A`, absorbed on leaving
//! the domain.

mod batch;
mod io;
mod path;
mod rng;
mod step;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{
    occupation_fraction, simulate_batch, simulate_batch_with, BatchPlan, BatchStats, MinDensity, Occupation,
    PathFunctional, PathSummary, TrajectoryBatch,
};
pub use io::{BatchSummaryJson, TrajectoryCsv};
pub use path::{simulate_path, simulate_path_indexed, PathEnd, Trajectory};
pub use rng::{path_rng, PathRng};
pub use step::em_step;

/// What happens to paths leaving the truncation box while still in `Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationPolicy {
    /// Killed like any other exit, not flagged.
    KillAtBox,
    /// Killed and flagged as truncated.
    #[default]
    FlagTruncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Base time step.
    pub h: f64,
    /// Largest drift displacement allowed in one substep.
    pub eta: f64,
    /// Horizon `T`.
    pub horizon: f64,
    pub truncation: TruncationPolicy,
    pub seed: u64,
    /// Maximum number of substeps a base step may be split into; the step
    /// never drops below `h / substep_limit`.
    pub substep_limit: u32,
}

impl SimConfig {
    pub fn new(h: f64, horizon: f64, seed: u64) -> Self {
        Self {
            h,
            eta: 0.05,
            horizon,
            truncation: TruncationPolicy::FlagTruncated,
            seed,
            substep_limit: 1000,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.h) || !pos(self.eta) || !pos(self.horizon) {
            return Err(Error::Config(format!(
                "h, eta and horizon must be positive (h = {}, eta = {}, T = {})",
                self.h, self.eta, self.horizon
            )));
        }
        if self.substep_limit < 1 {
            return Err(Error::Config("substep limit must be at least 1".into()));
        }
        Ok(())
    }

    pub fn substep_floor(&self) -> f64 {
        self.h / f64::from(self.substep_limit)
    }
}
