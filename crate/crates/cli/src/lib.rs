//! Command-line pipeline around `discharge-core`: file formats, run
//! configuration, the per-split experiment and its manifest.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod stages;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{run_pipeline, RunOutcome};
