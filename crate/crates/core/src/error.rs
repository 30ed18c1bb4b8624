use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),

    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size too large for exact regularizer step (alpha * lambda = {0})")]
    StepTooLarge(f64),

    #[error("line search diverged (L_k = {0:e})")]
    LineSearchDiverged(f64),

    #[error("strong convexity constant must be positive")]
    NotStronglyConvex,

    #[error("large-step hypothesis violated: n = {n} < 8L/mu = {required}")]
    LargeStepHypothesis { n: usize, required: f64 },

    #[error("reference solver did not converge (gradient norm {grad_norm:e} after {passes} effective passes)")]
    ReferenceNotConverged { grad_norm: f64, passes: f64 },

    #[error("all step-size candidates diverged")]
    AllCandidatesDiverged,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
