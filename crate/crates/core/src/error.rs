use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A step size was requested before any runtime had been observed.
    #[error("no runtime observations recorded yet")]
    NoObservations,

    #[error("{what} {value} is outside the valid range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },

    /// The feedback loop was asked for a prediction without any training data.
    #[error("no training data for {0}")]
    NoTrainingData(String),

    #[error("metrics group `{0}` has no rows")]
    EmptyGroup(String),

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    /// A CSV row could not be parsed. `row` is 1-based and counts data rows only.
    #[error("{}: row {row}, column `{column}`: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    /// A CSV row parsed but violates a record invariant.
    #[error("{}: row {row}: {message}", path.display())]
    Validation { path: PathBuf, row: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
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
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for trace parse and validation failures.
    pub fn is_trace_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Validation { .. } | Error::Csv(_))
    }
}
