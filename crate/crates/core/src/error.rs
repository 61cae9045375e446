use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("moment {0} is not finite for this law")]
    InfiniteMoment(String),

    #[error("exponential moment diverges at u = {u} (component {component}: {detail})")]
    ExpMomentDivergence {
        u: f64,
        component: usize,
        detail: String,
    },

    #[error("missing moment input: {0}")]
    MissingMoment(String),

    #[error("exercise time {0} is not on the simulation grid")]
    OffGrid(f64),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
