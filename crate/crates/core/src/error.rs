use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("SVD of {rows}x{cols} matrix did not converge (off-diagonal residual {residual:e})")]
    SvdNoConvergence {
        rows: usize,
        cols: usize,
        residual: f64,
    },

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("all log-weights are -inf")]
    DegenerateWeights,

    #[error("amplitude must be nonnegative, got {0}")]
    NegativeAmplitude(f64),

    #[error("invalid block length {len}: {reason}")]
    InvalidBlockLength { len: usize, reason: &'static str },

    #[error("matrix is rank deficient (rank {rank} of {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("insufficient training samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("detector state became non-finite at iteration {iteration}: {quantity}")]
    DetectorNonFinite {
        iteration: usize,
        quantity: &'static str,
    },

    #[error("reference signal has zero energy")]
    ZeroEnergyReference,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed model record: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
