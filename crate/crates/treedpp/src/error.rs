use thiserror::Error;

/// Library-wide error type. The CLI maps variants onto exit codes, so new
/// variants should pick the closest existing family.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("eigenvalue {value} outside [{lo}, {hi}]")]
    Spectrum { value: f64, lo: f64, hi: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<crate::special::SpecialError> for Error {
    fn from(e: crate::special::SpecialError) -> Self {
        Error::Numeric(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
