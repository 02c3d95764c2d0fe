use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("underdetermined system: {rows} samples for {cols} unknowns; use the sparse (LARS) fit when N < r")]
    Underdetermined { rows: usize, cols: usize },

    #[error("rank deficient design matrix: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("size cap exceeded: {what} would have {size} entries (cap {cap})")]
    CapExceeded { what: &'static str, size: u128, cap: u128 },

    #[error("zero output variance: {0}")]
    ZeroVariance(&'static str),

    #[error("symmetric output: skewness indices undefined (gamma = {gamma:e})")]
    SymmetricOutput { gamma: f64 },

    #[error("quadrature too coarse: {points} points per dimension, need at least {needed}")]
    QuadratureTooCoarse { points: usize, needed: usize },

    #[error("lift residual {residual:e} exceeds threshold {threshold:e}: reduced basis is not representable in the full basis")]
    LiftResidual { residual: f64, threshold: f64 },

    #[error("too few samples: {got} available, {needed} required ({context})")]
    TooFewSamples { got: usize, needed: usize, context: &'static str },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
