use thiserror::Error;

pub type Result<T, E = FsnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FsnError {
    #[error("invalid simplex dimension: k = {k} requires at least {} points, got n = {n}", k + 1)]
    InvalidDimension { k: usize, n: usize },

    #[error("simplex dimension {k} exceeds ambient dimension {ambient}")]
    DimensionExceedsAmbient { k: usize, ambient: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },

    #[error("degenerate simplex: volume is zero")]
    DegenerateSimplex,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("subspace dimension mismatch: {left} vs {right}")]
    SubspaceDimensionMismatch { left: usize, right: usize },

    #[error("basis is not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("point cloud has zero energy (all points identical)")]
    ZeroEnergy,

    #[error("dataset has {available} classes, episode needs {ways}")]
    InsufficientClasses { available: usize, ways: usize },

    #[error("class '{class}' has {available} items, episode needs at least {needed}")]
    InsufficientItems {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFiniteTensor(String),

    #[error("episode {episode} failed after {completed} completed episodes: {source}")]
    Evaluation {
        episode: usize,
        completed: usize,
        #[source]
        source: Box<FsnError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
