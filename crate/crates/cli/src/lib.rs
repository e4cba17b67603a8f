//! Batch driver for the quantum hypercube inequality suite: configuration,
//! the five verbs, and report writers.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod witness;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
