use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty coefficient region")]
    EmptyRegion,

    #[error("delay line has no history yet")]
    HistoryUninitialized,

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("zero field in an estimate that needs a nonzero field")]
    ZeroField,

    #[error("dimension {dim} exceeds limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("eigen-solver did not converge")]
    EigenNoConvergence,

    #[error("linear solve failed: {0}")]
    SolverFailure(String),

    #[error("blow-up detected at t = {t}: max |zeta| = {linf}")]
    BlowUp { t: f64, linf: f64 },

    #[error("rate fit: {0}")]
    RateFit(String),

    #[error("field format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
