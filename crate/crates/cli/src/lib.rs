//! Batch front end for the `hsi-core` unmixing pipeline.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod pgm;

pub use args::{run, Cli, Command};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
