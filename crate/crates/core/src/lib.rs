//! Numerical laboratory for elliptic diffusions with singular drift and
//! absorption at the boundary.
//!
//! A problem instance is a domain, a symmetric locally elliptic matrix field
//! `A` and a density `rho`. From these the crate derives the drift of the
//! generator `Lf = sum a_ij d_i d_j f + b . grad f`, simulates the killed
//! process ([`sde`]), discretises the weighted Dirichlet form
//! `E(f, g) = int (A grad f, grad g) rho dx` on rectangular grids ([`form`]),
//! estimates semigroup and resolvent kernels by Monte Carlo ([`kernels`]),
//! computes discrete capacities ([`capacity`]) and packages all of it into
//! pass/fail verification tests with explicit error budgets ([`verify`]).
//!
//! With the default `parallel` feature, path batches, matrix assembly and
//! sparse mat-vecs run on rayon. Every reduction is order independent, so
//! results are bitwise identical to the sequential fallback.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod accum;
pub mod capacity;
pub mod error;
pub mod form;
pub mod kernels;
pub mod model;
pub mod par;
pub mod sde;
pub mod verify;

pub use error::{Error, Result};
pub use model::{DensityField, DomainGeometry, MatrixField, ProblemSpec, ScalarFn};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
