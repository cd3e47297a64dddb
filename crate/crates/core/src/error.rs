use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("Lyapunov certificate failed: {0}")]
    Certificate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("integration failure at t = {t}: {quantity} {detail}")]
    Integration {
        t: f64,
        quantity: String,
        detail: String,
    },

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("csv output: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
