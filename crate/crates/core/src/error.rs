use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::types::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{what}: byte length {len} is not a multiple of {unit} (residue {residue})")]
    Format {
        what: &'static str,
        len: u64,
        unit: u64,
        residue: u64,
    },

    #[error("{what}: expected {expected} entries, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what}: value {value} is out of range ({detail})")]
    OutOfRange {
        what: &'static str,
        value: String,
        detail: String,
    },

    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing config key `{0}`")]
    MissingKey(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(Violation),

    #[error("projection undefined for a point at the sensor origin")]
    UndefinedProjection,

    #[error("azimuth undefined for a point on the sensor's vertical axis")]
    UndefinedAzimuth,

    #[error("grid shape mismatch: expected {expected_h}x{expected_w}, found {found_h}x{found_w}")]
    ShapeMismatch {
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },

    #[error("range image carries no label grid")]
    MissingLabels,

    #[error("view {view} of {views} is missing or duplicated")]
    MissingView { view: usize, views: usize },

    #[error("tensor shape mismatch: {0}")]
    Tensor(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn out_of_range(
        what: &'static str,
        value: impl ToString,
        detail: impl ToString,
    ) -> Self {
        Error::OutOfRange {
            what,
            value: value.to_string(),
            detail: detail.to_string(),
        }
    }
}
