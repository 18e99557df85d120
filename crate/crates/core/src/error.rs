use thiserror::Error;

/// Errors produced by the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no training data")]
    NoTrainingData,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("feature set mismatch: expected {expected}, got {got}")]
    FeatureSetMismatch { expected: String, got: String },

    #[error("event interval [{start}, {end}) out of bounds for stream of length {len}")]
    IntervalOutOfBounds { start: usize, end: usize, len: usize },

    #[error("overlapping events at sample {0}")]
    OverlappingEvents(usize),

    #[error("timestamps not strictly increasing at row {row}: {prev} then {next}")]
    Unordered { row: usize, prev: u64, next: u64 },

    #[error("invalid frame at row {row}: {reason}")]
    InvalidFrame { row: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
