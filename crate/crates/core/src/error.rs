use thiserror::Error;

/// Errors raised by the numerical layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested post-selection outcome has zero probability.
    #[error("post-selection impossible: outcome probability {probability:e}")]
    PostSelectionImpossible { probability: f64 },

    /// A covariance matrix violates the uncertainty principle.
    #[error("unphysical covariance matrix: symplectic eigenvalue {nu} < 1")]
    Unphysical { nu: f64 },

    /// A closed-form sum produced a value no physical state can have.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    /// Malformed matrix input (shape, symmetry, unknown mode).
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// The caller asked for something the contract forbids.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;
