use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image {height}x{width} is smaller than window {scale}")]
    DimensionTooSmall {
        height: usize,
        width: usize,
        scale: usize,
    },

    #[error("window at ({row}, {col}) of side {scale} exceeds {height}x{width} raster")]
    OutOfBounds {
        row: usize,
        col: usize,
        scale: usize,
        height: usize,
        width: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("truncated data: {missing} bytes missing at byte {offset}")]
    Truncated { offset: u64, missing: u64 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("feature map index {0} outside 1..=30")]
    FeatureIndex(usize),

    #[error("degenerate constrained filter: off-center sum {0:e}")]
    DegenerateFilter(f64),

    #[error("architecture infeasible at scale {scale}: spatial side collapses below 1 px")]
    ArchitectureInfeasible { scale: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("negative pairwise weight {0}")]
    NegativeWeight(f64),

    #[error("missing decision for image `{0}`")]
    MissingDecision(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
