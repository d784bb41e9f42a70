use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),

    #[error("degenerate triangles (repeated index or zero area): {0:?}")]
    DegenerateTriangles(Vec<usize>),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("correspondence length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("{path}:{line}: index {index} out of range for {bound} target vertices")]
    IndexOutOfRange {
        path: PathBuf,
        line: usize,
        index: usize,
        bound: usize,
    },

    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{op}: non-finite value")]
    NonFinite { op: String },

    #[error("eigensolver did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("second eigenvalue {0:e} is not positive; mesh appears disconnected")]
    Disconnected(f64),

    #[error("vertex {0} is unreachable; mesh is disconnected")]
    Unreachable(usize),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("container format error: {0}")]
    Container(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("no spectra cache at {0}; run precompute first")]
    MissingCache(PathBuf),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::ConfigMismatch(_) | Error::Json(_) => ErrorClass::Config,
            Error::ShapeMismatch { .. }
            | Error::NonFinite { .. }
            | Error::NotConverged { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::Singular(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
