use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("event {index} out of bounds: ({x}, {y}) not inside {width}x{height}")]
    OutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    #[error("timestamp decreases at index {index}: {prev} -> {current}")]
    Ordering { index: usize, prev: u64, current: u64 },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("dimension mismatch in {layer}: expected {expected}, got {actual}")]
    Dimension {
        layer: String,
        expected: String,
        actual: String,
    },

    #[error("empty point set, sample unusable")]
    EmptySample,

    #[error("coordinate {value} outside [0, {limit})")]
    CoordinateRange { value: f64, limit: usize },

    #[error("NaN entry at index {0} in prediction vector")]
    NanPrediction(usize),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
