//! Experiment driver: config resolution, runs for each mode, CSV artifacts,
//! manifests and optional SVG charts.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod run;

pub use config::{ExperimentConfig, Mode};
pub use error::{LabError, Result};
