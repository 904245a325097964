//! Monte Carlo estimators of the semigroup and resolvent along simulated
//! paths, and consistency checks against the grid solves.

mod dynkin;
mod estimate;
mod laplace;
mod mc;

pub use dynkin::{dynkin_fem_residual, dynkin_stat, dynkin_stat_with, martingale_paths, DynkinStat, MartingalePaths};
pub use estimate::{KernelEstimate, KernelEstimateJson, Target};
pub use laplace::{laplace_residual, LaplaceResidual, LaplaceRoute};
pub use mc::{pt_mc, pt_mc_many, rlambda_mc, rlambda_mc_with, Sampling};
