//! Error types shared across the crate.

/// Crate-wide error type.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure did not reach its target accuracy. Carries the
    /// best available estimate and the achieved error bound.
    #[error("numeric failure: {what} (best estimate {best:e}, error bound {bound:e})")]
    Numeric { what: String, best: f64, bound: f64 },

    /// An exact evaluation was refused because its cost grows combinatorially;
    /// the message names the cheaper route.
    #[error("refused: {0}")]
    Refused(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
