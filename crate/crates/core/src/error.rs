use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("quadratic form is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("every component expectation of the weight is zero")]
    ZeroExpectation,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("projection did not converge after {iterations} sweeps (last movement {movement:e})")]
    NonConvergence { iterations: usize, movement: f64 },

    #[error("non-finite interaction energy {0}; check the cutoff A")]
    NonFiniteEnergy(f64),

    #[error("no proposal accepted during the adaptation window")]
    ZeroAcceptance,

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("non-positive log argument {value:e} at recursion step {step}; alpha too small for the chosen constants")]
    NonPositiveLog { step: usize, value: f64 },

    #[error("empty chain")]
    EmptyChain,

    #[error("rejection sampler exhausted after {attempts} attempts")]
    SamplerExhausted { attempts: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
