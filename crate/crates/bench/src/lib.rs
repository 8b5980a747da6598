//! Command implementations behind the `cwgp` binary: model specs, fitting,
//! prediction, sampling, benchmark suites and the approximation and
//! robustness experiments.

pub mod approx;
pub mod benchmark;
pub mod commands;
pub mod error;
pub mod robustness;
pub mod spec;

pub use error::{CliError, CliResult, ErrorKind};
