use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("frame {frame} has no background pixels")]
    EmptyBackground { frame: usize },

    #[error("real and degraded renders disagree on geometry: {0}")]
    GeometryMismatch(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid step: {0}")]
    Step(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("checkpoint not found: {0}")]
    CheckpointNotFound(PathBuf),

    #[error("unknown scene id {0}")]
    UnknownScene(u64),

    #[error("non-finite loss at iteration {iteration} (seed {seed}); diagnostics in {dump}")]
    NonFiniteLoss {
        iteration: usize,
        seed: u64,
        dump: PathBuf,
    },

    #[error("estimator training did not converge: {0}")]
    TrainingFailure(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
