use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),

    #[error("negative squared distance {0}")]
    NegativeDistance(f64),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty chain: burn-in of {burn} leaves no samples out of {n_iter} iterations")]
    EmptyChain { n_iter: usize, burn: usize },

    #[error("elliptical slice bracket collapsed without an acceptable proposal")]
    BracketCollapsed,

    #[error("triangulation undefined: need at least {needed} points in {dim}d, got {got}")]
    TooFewPoints { needed: usize, dim: usize, got: usize },

    #[error("degenerate point configuration: {0}")]
    Degenerate(String),

    #[error("input dimension {0} exceeds 8; triangulation candidates are intractable there")]
    DimensionTooHigh(usize),

    #[error("empty Pareto front")]
    EmptyFront,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("probability {0} outside [0, 1]")]
    ProbabilityRange(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
