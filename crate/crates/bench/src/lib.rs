//! Experiment harness for the `nashdyn` solvers: TOML configs, seeded
//! multi-start sweeps with paired initial points, trace CSVs and JSON
//! summaries.

pub mod config;
mod error;
pub mod io;
pub mod sweep;

pub use config::{Experiment, ExperimentConfig, InitSpec, Method};
pub use error::{BenchError, Result};
pub use sweep::{sweep, SweepOptions, SweepOutput, SweepSummary};
