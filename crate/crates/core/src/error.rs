use thiserror::Error;

/// Errors raised by the accountant and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A trade-off curve failed validation.
    #[error("invalid trade-off curve: {0}")]
    InvalidCurve(String),

    /// A requested guarantee cannot be reached (for example, δ = 0 for μ > 0).
    #[error("unreachable: {0}")]
    Unreachable(String),

    /// Numeric accounting would truncate more mass than the target allows.
    #[error("resolution error: truncated mass {truncated:e} exceeds {limit:e}")]
    Resolution { truncated: f64, limit: f64 },

    /// Invalid simulation or ledger configuration.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// The simulation produced a non-finite loss.
    #[error("divergence: client {client} epoch {epoch}: {message}")]
    Diverged {
        client: usize,
        epoch: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
