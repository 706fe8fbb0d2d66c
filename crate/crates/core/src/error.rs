use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The simulated state became non-finite.
    #[error("simulation diverged at step {step}: state {state}")]
    Simulation { step: usize, state: f64 },

    /// A numerical routine failed or produced an unusable quantity
    /// (zero normalizer, degenerate bias bracket, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input data or configuration.
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
