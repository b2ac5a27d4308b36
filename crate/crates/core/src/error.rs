use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite vehicle state: {0}")]
    NonFiniteState(String),

    #[error("empty control sequence")]
    EmptyControls,

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("degenerate centerline: {0}")]
    DegenerateCenterline(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("rotation is not orthonormal with det +1 (residual {0:e})")]
    NonOrthonormalRotation(f64),

    #[error("reduced homography is singular")]
    SingularHomography,

    #[error("importance weights underflowed to zero")]
    WeightUnderflow,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("track mask is empty")]
    EmptyTrackMask,

    #[error("predictor failed at placement ({row}, {col}): {source}")]
    Predictor {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("target score {target} unreachable: family spans [{low}, {high}]")]
    Unreachable { target: f64, low: f64, high: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
