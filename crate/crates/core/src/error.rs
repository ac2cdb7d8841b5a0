use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid tour: {0}")]
    InvalidTour(String),

    #[error("raster error: {0}")]
    Raster(String),

    #[error("numeric guard tripped: {0}")]
    Numeric(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance of {n} cities exceeds the {limit}-city limit of {solver}")]
    SizeLimit {
        solver: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("degenerate path between cities {0} and {1}: both map to the same pixel")]
    DegeneratePath(usize, usize),

    #[error("empty input: {0}")]
    EmptySet(&'static str),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("unsupported checkpoint format: {0}")]
    Version(String),

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Malformed {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Errors caused by bad or inconsistent input data, as opposed to
    /// numeric failures or usage problems.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Numeric(_) | Error::Config(_))
    }
}
