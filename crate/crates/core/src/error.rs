use thiserror::Error;

/// Errors raised by the loss, inference and training routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An exponential evaluation would overflow.
    #[error("overflow evaluating {what} at u = {at}")]
    Overflow { what: &'static str, at: f64 },

    /// The request exceeds a hard size guard of an exact routine.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A numerical procedure failed to converge or produced a degenerate value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Training diverged past the objective guard.
    #[error("training diverged at iteration {iteration}: objective {objective:e}")]
    Diverged { iteration: usize, objective: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(u: f64, what: &str) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite, got {u}")))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
