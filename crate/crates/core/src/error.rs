//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by state constructors, samplers, likelihood engines and
/// the bound calculator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian: max |X - X^+| = {residual:e}")]
    NotHermitian { residual: f64 },

    #[error("matrix does not have unit trace: Tr = {trace}")]
    NotUnitTrace { trace: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue = {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("rejection sampling exhausted after {attempts} attempts (dimension too small for the truncation constants?)")]
    TruncationExhausted { attempts: usize },

    #[error("budget exceeded: {what} = {requested} > {budget}")]
    BudgetExceeded {
        what: &'static str,
        requested: usize,
        budget: usize,
    },

    #[error("exact likelihood engines accept real outcome vectors only (max |imag| = {max_imag:e}); route complex transcripts to the Monte-Carlo engine")]
    ComplexInput { max_imag: f64 },

    #[error("outcome vector at step {step} is not supported on a single block")]
    MixedBlockSupport { step: usize },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("all mass removed: bucketing zeroed out the entire spectrum")]
    AllMassRemoved,

    #[error(
        "perturbation tuning infeasible: eps = {eps} exceeds the feasible maximum {feasible_max}"
    )]
    NonBracketing { eps: f64, feasible_max: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. } => 3,
            Error::TruncationExhausted { .. } => 4,
            _ => 2,
        }
    }
}
