//! Config-driven scenario runner for causal membership inference evaluation.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use bundle::{run_scenario, Manifest, MetricsDoc, RunOptions};
pub use config::{PropensityChoice, RunConfig, Scenario};
pub use error::{CliError, Result};
