//! Data loading, configuration, presets and reporting for the `ncg` binary.

pub mod config;
pub mod experiment;
pub mod libsvm;
pub mod report;

pub use config::{ConfigError, KeyValues};
pub use experiment::{run_experiment, ExperimentOutcome, ExperimentSpec, Instance, Preset, ProblemKind};
pub use libsvm::{Dataset, LibsvmError};
