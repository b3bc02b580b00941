use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("chain not irreducible")]
    NotIrreducible,

    #[error("reducible or degenerate chain: stationary probability of state {state} is zero")]
    DegenerateChain { state: usize },

    #[error("non-generative emission model: abstract density tables cannot be sampled")]
    NonGenerativeEmission,

    #[error("invalid observation at position {position}: {reason}")]
    InvalidObservation { position: usize, reason: String },

    #[error("invalid pin set: {0}")]
    InvalidPins(String),

    #[error("inadmissible pin set: pinned configuration has zero likelihood")]
    InadmissiblePins,

    #[error("no admissible path")]
    NoAdmissiblePath,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
