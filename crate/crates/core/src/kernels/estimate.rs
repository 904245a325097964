use serde::{Deserialize, Serialize};

use crate::sde::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// `P_t f(x)`
    #[serde(rename = "P_t f")]
    Semigroup,
    /// `R_lambda f(x)`
    #[serde(rename = "R_lambda f")]
    Resolvent,
}

/// Monte Carlo estimate of a kernel applied to a function at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub target: Target,
    pub x: Vec<f64>,
    /// Time for the semigroup, rate for the resolvent.
    pub t_or_lambda: f64,
    pub value: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub se: f64,
    pub n: usize,
    pub truncated_frac: f64,
    pub seed: u64,
    pub h: f64,
    pub eta: f64,
    pub horizon: f64,
    /// `exp(-lambda T) sup|f| / lambda` for resolvent estimates.
    pub tail_bound: Option<f64>,
}

/// The exported record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimateJson {
    pub target: Target,
    pub x: Vec<f64>,
    pub t_or_lambda: f64,
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub truncated_frac: f64,
    pub seed: u64,
}

impl KernelEstimate {
    pub(crate) fn new(target: Target, x: &[f64], t_or_lambda: f64, cfg: &SimConfig, horizon: f64) -> Self {
        Self {
            target,
            x: x.to_vec(),
            t_or_lambda,
            value: 0.0,
            se: 0.0,
            n: 0,
            truncated_frac: 0.0,
            seed: cfg.seed,
            h: cfg.h,
            eta: cfg.eta,
            horizon,
            tail_bound: None,
        }
    }

    pub fn record(&self) -> KernelEstimateJson {
        KernelEstimateJson {
            target: self.target,
            x: self.x.clone(),
            t_or_lambda: self.t_or_lambda,
            value: self.value,
            se: self.se,
            n: self.n,
            truncated_frac: self.truncated_frac,
            seed: self.seed,
        }
    }
}
