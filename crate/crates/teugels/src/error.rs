use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unsupported: {0}")]
    Capability(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("moment table coverage: {0}")]
    Coverage(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code class used by the CLI: 2 validation, 3 numeric, 4 capability.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) | Error::Domain(_) | Error::Parameter(_) | Error::Config(_) => 2,
            Error::Numeric(_) | Error::Coverage(_) => 3,
            Error::Capability(_) => 4,
        }
    }
}
