//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input file: {0}")]
    MissingFile(String),

    #[error("malformed row at {path}:{line}: {reason}")]
    MalformedRow {
        path: String,
        line: u64,
        reason: String,
    },

    #[error("duplicate participant id {0}")]
    DuplicateParticipant(String),

    #[error("non-monotonic timestamps in log of participant {0}")]
    NonMonotonicTimestamps(String),

    #[error("participant {participant} belongs to more than one group at second {second}")]
    OverlappingMembership { participant: String, second: u64 },

    #[error("label grid contains no positive labels")]
    NoPositives,

    #[error("too few samples to resample (need at least 2)")]
    TooFewSamples,

    #[error("no ceiling-beacon observation for participant {participant}, beacon {beacon}")]
    AllMissing { participant: String, beacon: usize },

    #[error("RSSI is unknown; cannot estimate distance")]
    UnknownRssi,

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("all distances are equal; normalized proximity is undefined")]
    DegenerateRange,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("feature schema is empty")]
    EmptySchema,

    #[error("row has {got} features but the model schema has {expected}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("hyper-parameter grid is empty")]
    EmptyGrid,

    #[error("{pairs} distinct pairs cannot be split into {folds} folds")]
    TooFewPairs { pairs: usize, folds: usize },

    #[error("{agents} agents cannot fit the {width:.2}x{depth:.2} m interaction area")]
    InfeasibleDensity {
        agents: usize,
        width: f64,
        depth: f64,
    },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("missing input: {0}")]
    InputMissing(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier for CLI error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::DuplicateParticipant(_) => "DuplicateParticipant",
            Error::NonMonotonicTimestamps(_) => "NonMonotonicTimestamps",
            Error::OverlappingMembership { .. } => "OverlappingMembership",
            Error::NoPositives => "NoPositives",
            Error::TooFewSamples => "TooFewSamples",
            Error::AllMissing { .. } => "AllMissing",
            Error::UnknownRssi => "UnknownRssi",
            Error::NonPositiveDistance(_) => "NonPositiveDistance",
            Error::DegenerateRange => "DegenerateRange",
            Error::SingleClass => "SingleClass",
            Error::EmptySchema => "EmptySchema",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::EmptyGrid => "EmptyGrid",
            Error::TooFewPairs { .. } => "TooFewPairs",
            Error::InfeasibleDensity { .. } => "InfeasibleDensity",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::InputMissing(_) => "InputMissing",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
