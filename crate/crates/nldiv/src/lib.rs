//! Batch front-end: experiment configs in, CSV tables out.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod table;
pub mod verify;

pub use config::{load_config, ConfigError, Experiment, ExperimentConfig};
