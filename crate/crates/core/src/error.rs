use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or unsupported configuration (grid sizes, caps, kernel choices).
    #[error("configuration error: {0}")]
    Config(String),

    /// A pointwise kernel was evaluated at its singularity.
    #[error("kernel `{kernel}` is singular at zero separation")]
    Singularity { kernel: String },

    /// The temporal covariance is not a locally integrable function.
    #[error("temporal kernel `{0}` is not locally integrable")]
    NotLocallyIntegrable(String),

    #[error("covariance matrix is not positive semidefinite (jitter ladder exhausted at {jitter:e})")]
    NotPsd { jitter: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// A series needs more terms than were allowed to reach the tail tolerance.
    #[error("series tail not below tolerance after {terms} terms")]
    NeedMoreTerms { terms: usize },

    #[error("fit refused: {0}")]
    Fit(String),

    /// The initial condition or the coefficient fail the standing assumptions.
    #[error("assumption violated: {0}")]
    Assumption(String),
}

impl Error {
    /// True for failures that come from numerics rather than from user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPsd { .. } | Error::Quadrature(_) | Error::NeedMoreTerms { .. }
        )
    }
}
