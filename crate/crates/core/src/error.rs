use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the relit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate ray: direction is parallel to the parameterization planes")]
    DegenerateRay,

    #[error("ray intersection falls outside the normalization bounds on axis {axis} (normalized value {value})")]
    OutOfBounds { axis: usize, value: f64 },

    #[error("ray points away from the parameterization planes")]
    BehindPlanes,

    #[error("training diverged at {location}: {message}")]
    Training { location: String, message: String },

    #[error("light calibration failed: {0}")]
    Calibration(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
