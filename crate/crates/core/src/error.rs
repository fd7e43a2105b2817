use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing occlusion entry for actor {0}")]
    MissingOcclusion(u32),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("covariance is not symmetric positive semi-definite")]
    NotPositiveSemiDefinite,

    #[error("measurement noise is not positive definite")]
    NotPositiveDefinite,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("not enough detected rows: need at least {needed}, got {got}")]
    NotEnoughDetections { needed: usize, got: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("traces do not overlap in time")]
    NonOverlappingTraces,

    #[error("normalizing entry ({row}, {col}) is missing or zero")]
    ZeroNormalizer { row: String, col: String },

    #[error("unknown model kind `{0}`")]
    UnknownModelKind(String),

    #[error("unsupported {what} version {found} (expected {expected})")]
    UnsupportedVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
