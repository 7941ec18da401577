use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {n} exceeds the cap of {cap}")]
    DimensionTooLarge { n: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid measure specification: {0}")]
    InvalidSpec(String),

    #[error("weight table has no positive mass")]
    ZeroMass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("harmonic extension is not positive at the evaluation point (value {0})")]
    NonPositiveDensity(f64),

    #[error("measure-valued step lost all mass; lower dt")]
    MassCollapse,

    #[error("test function is not {0}-Lipschitz")]
    NotLipschitz(f64),

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("linear program did not converge: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
