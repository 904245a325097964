//! Declarative experiment runner for `sdlab`.
//!
//! An experiment is one TOML file: the problem, simulation and grid
//! parameters plus a list of jobs. [`parse_config`] validates the whole file
//! and reports every problem at once; [`run`] executes the jobs and writes
//! plot-ready CSV, JSON reports and a `manifest.json` tying outputs to the
//! exact inputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod families;
mod run;

pub use config::{parse_config, ConfigErrors, ExperimentConfig, JobKind, JobSpec};
pub use run::{
    inputs_hash, resolve_output_dir, run, JobRecord, JobStatus, Manifest, MANIFEST_FILE, MANIFEST_SCHEMA,
    OUTPUT_ROOT_ENV,
};
