//! Experiment orchestration on top of `caim_core`: configs, paired-seed runs,
//! result bundles, CSV/JSON export and SVG plots.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod svg;

pub use config::{ExperimentConfig, ProblemSource, Scenario};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, Machine, ResultBundle};
