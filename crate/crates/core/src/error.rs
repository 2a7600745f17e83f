use alloc::string::String;

/// Errors raised by the scoring kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("embedding set has no rows")]
    Empty,
    #[error("embedding dimension must be at least 1")]
    ZeroDimension,
    #[error("payload holds {found} values but shape requires {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: u32, classes: usize },
    #[error("label array holds {found} entries for {expected} rows")]
    LabelCount { expected: usize, found: usize },
    #[error("class labels are required")]
    MissingLabels,
    #[error("class {class} has no samples")]
    EmptyClass { class: u32 },
    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { required: usize, found: usize },
    #[error("covariance is not positive definite even with ridge {epsilon:e}")]
    NotPositiveDefinite { epsilon: f64 },
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("{side} score array is empty")]
    EmptyScores { side: &'static str },
    #[error("row {row} has zero norm and cannot be normalized")]
    ZeroNorm { row: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
