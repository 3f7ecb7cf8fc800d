//! Cached stage pipeline over `qchaos-core`: configuration, artifacts, stages and plot data.

pub mod artifact;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plots;

pub use config::RunConfig;
pub use error::{PipelineError, Result};
pub use pipeline::{Pipeline, Stage};
