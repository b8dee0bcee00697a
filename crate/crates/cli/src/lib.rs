//! Command-line driver: one TOML config feeds dataset synthesis, feature
//! caching, training, evaluation and the feature-set sweep.

pub mod commands;
pub mod config;

pub use config::{Overrides, RunConfig};
