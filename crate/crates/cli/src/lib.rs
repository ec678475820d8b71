//! Experiment configs and stage orchestration behind the `pmcmc` binary.

pub mod config;
pub mod pipeline;

pub use config::{ConfigError, ExperimentConfig};
pub use pipeline::{Layout, Pipeline, Stage, StageError};
