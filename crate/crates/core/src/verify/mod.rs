//! Named pass/fail tests with explicit error budgets.
//!
//! Every test fixes its budgets before computing statistics and records
//! both in a [`TestReport`]. A check whose standard error alone exceeds its
//! useful scale is marked inconclusive instead of passing silently.

mod identities;
mod regularity;
mod report;
mod stochastic;

pub use identities::{kernel_identity_test, symmetry_test, IdentityConfig};
pub use regularity::{random_fourier_batch, regularity_ratio_test, RegularityConfig};
pub use report::{Check, TestReport, Verdict};
pub use stochastic::{avoidance_test, martingale_test, occupation_test, MartingaleBudget};
