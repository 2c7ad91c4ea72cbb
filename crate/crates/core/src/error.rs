use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),

    #[error("token id {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: u32 },

    #[error("invalid lattice point: {0}")]
    InvalidLattice(String),

    #[error("rank {rank} out of range: lattice has {size} points")]
    RankOutOfRange { rank: String, size: String },

    /// `p == q̂` exactly, so `max(0, p - q̂)` has zero mass.
    #[error("residual distribution undefined: target equals quantized draft distribution")]
    ResidualUndefined,

    #[error("drafted token {token} has zero quantized probability under quantize-sample drafting")]
    ZeroQuantizedDraft { token: u32 },

    #[error("enumeration of {size} draft sequences exceeds limit {limit}")]
    EnumerationTooLarge { size: u128, limit: u128 },

    #[error("link rate must be positive, got {0}")]
    NonPositiveRate(f64),

    #[error("iteration latency must be positive, got {0}")]
    NonPositiveLatency(f64),

    #[error("stationary distribution undefined: both transition probabilities are zero")]
    StationaryUndefined,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    InsufficientReplay { have: usize, need: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed weights file: {0}")]
    Weights(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
