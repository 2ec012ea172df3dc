use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("insufficient data: need at least {required} observations, got {n}")]
    InsufficientData { n: usize, required: usize },
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sampler could not initialize: {0}")]
    SamplerInit(String),
    #[error("no posterior draws")]
    EmptyDraws,
    #[error("zero is not in the interior of the convex hull of the moment rows")]
    NotInHull,
    #[error("did not converge: {0}")]
    Convergence(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
