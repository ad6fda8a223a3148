use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid curve spec: {0}")]
    Spec(String),

    #[error("radius out of range: {0}")]
    Range(String),

    #[error("sheet tracking failed at sample {index}: {reason}")]
    Tracking { index: usize, reason: String },

    #[error("tracking failed on ring {ring}: {reason} (try a larger n_theta)")]
    Refinement { ring: usize, reason: String },

    #[error("degenerate height: {0}")]
    DegenerateHeight(String),

    #[error("degenerate blow-up: {0}")]
    DegenerateBlowup(String),

    #[error("tilt too large: {0}")]
    Tilt(String),

    #[error("optimization did not converge: {0}")]
    Optimization(String),

    #[error("insufficient data: {0}")]
    Data(String),

    #[error("io: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// True when the error comes from numerical degeneracy rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Tracking { .. }
                | Error::Refinement { .. }
                | Error::DegenerateHeight(_)
                | Error::DegenerateBlowup(_)
                | Error::Tilt(_)
                | Error::Optimization(_)
                | Error::Data(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
