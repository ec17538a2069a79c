use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite objective or gradient at the starting point")]
    NonFiniteStart,

    #[error("infeasible set: budget {budget} is outside [0, {dim}]")]
    InfeasibleSet { budget: f64, dim: usize },

    #[error("brute-force projection refused for dimension {dim} (limit {limit})")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("singular linear system ({context}); estimated condition number {condition:e}")]
    SingularSystem { context: String, condition: f64 },

    #[error(
        "noise subspace is empty: every singular value exceeds sigma^2 = {threshold:e}; \
         raise the noise level estimate"
    )]
    EmptyNoiseSubspace { threshold: f64 },

    #[error("objective evaluation failed: {0}")]
    Evaluation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
