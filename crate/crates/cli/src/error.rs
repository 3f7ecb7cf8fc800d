use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Numerical(#[from] qchaos_core::Error),

    #[error("stage `{stage}` needs output of `{needs}`: {reason}")]
    MissingDependency {
        stage: &'static str,
        needs: &'static str,
        reason: String,
    },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed artifact: {message}")]
    Artifact { path: PathBuf, message: String },
}

impl PipelineError {
    /// Process exit status: 1 config, 2 numerical or I/O failure, 3 missing dependency.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Numerical(_) | PipelineError::Io { .. } | PipelineError::Artifact { .. } => 2,
            PipelineError::MissingDependency { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        PipelineError::Artifact {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
