use std::path::PathBuf;

use crate::pointcloud::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A record in an input stream violates its domain (e.g. an event outside the sensor).
    #[error("malformed input at record {index}: {reason}")]
    MalformedInput { index: usize, reason: String },

    #[error("scene validation failed: {0}")]
    Validation(ValidationReport),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: missing key `{key}`")]
    MissingKey { path: PathBuf, key: String },

    #[error("objective returned {value} at theta = {theta:?}")]
    NonFiniteObjective { theta: [f64; 6], value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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
