use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{procedure}: design is rank deficient (rank {rank}, needed {needed})")]
    RankDeficient {
        procedure: &'static str,
        rank: usize,
        needed: usize,
    },

    #[error("interpolation threshold: p = n = {n} has no finite closed form")]
    InterpolationThreshold { n: usize },

    #[error("leverage h_{index}{index} = {leverage} is numerically 1; leave-one-out quantities are undefined")]
    InterpolationLeverage { index: usize, leverage: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("spline system for s = {s} is numerically singular")]
    SplineConditioning { s: usize },

    #[error("collinear column: residual norm {0} below tolerance")]
    Collinear(f64),

    #[error("({n}, {p}) outside the valid range: {reason}")]
    OutOfRange { n: usize, p: usize, reason: String },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for failures caused by the numerics rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::InterpolationThreshold { .. }
                | Error::InterpolationLeverage { .. }
                | Error::NotPositiveDefinite(_)
                | Error::SplineConditioning { .. }
                | Error::Collinear(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
