use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("node {index} lies on the sonic plane v+u=0 (ker B is not trivial)")]
    SonicNode { index: usize },
    #[error("grid is not symmetric about v1 = {center}; reflection unavailable")]
    AsymmetricGrid { center: f64 },
    #[error("collision invariants are rank deficient: rank {rank} of {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("B psi is not in the range of L: kernel component {residual:e}")]
    NotInRange { residual: f64 },
    #[error("degenerate flow speed: {0}")]
    Degenerate(String),
    #[error("evaluation inside the excluded region: {0}")]
    Excluded(String),
    #[error("source rate {rate} is resonant with a pencil eigenvalue")]
    Resonant { rate: f64 },
    #[error("boundary family too small: rank {rank} < {needed} conditions")]
    InsufficientBoundary { rank: usize, needed: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}
