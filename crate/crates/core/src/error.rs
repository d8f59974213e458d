use thiserror::Error;

/// Errors produced by the simulator and the analysis routines.
#[derive(Debug, Error)]
pub enum QntkError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("gate matrix is not unitary (max deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("training diverged at step {step}: |eps| = {norm:.3e} exceeds 10x the initial {initial:.3e}")]
    Diverged { step: usize, norm: f64, initial: f64 },

    #[error("spectral radius of 1 - eta*K is {radius:.6} (must be < 1 on the nonzero eigenspace)")]
    Unstable { radius: f64 },

    #[error("too few samples: {found} (need at least {required})")]
    TooFewSamples { found: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QntkError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(QntkError::DimensionMismatch { expected, found })
    }
}
