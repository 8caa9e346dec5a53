//! Batch experiment runner for the `sobo` solvers: TOML configs, libsvm data,
//! per-run CSV traces and a JSON summary keyed by the config hash.

pub mod config;
pub mod csv;
pub mod error;
pub mod libsvm;
pub mod output;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, GridPreset, Overrides};
pub use error::{CliError, Result};
pub use libsvm::{parse_libsvm, parse_libsvm_str};
pub use run::{execute, plan, Status};
