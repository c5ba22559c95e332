use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("scenario generation failed: {0}")]
    Generation(String),

    #[error("no path from {from} to {to}")]
    NoPath { from: crate::Cell, to: crate::Cell },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("dependency cycle through tasks {0:?}")]
    DependencyCycle(Vec<usize>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at iteration {iteration}: {message}")]
    Diverged { iteration: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
