use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("path delay {delay} must be smaller than the frame length {n}")]
    DelayTooLarge { delay: usize, n: usize },

    #[error("BEM order {order} must be smaller than R*N = {limit} (aliased basis)")]
    AliasedBasis { order: usize, limit: usize },

    #[error("frame too small: 3*Q_B + 2 = {required} must be < N = {n}")]
    FrameTooSmall { required: usize, n: usize },

    #[error("numerically degenerate matrix: condition number {condition:.3e} exceeds {limit:.1e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("average equalizer gain {0} lies outside (0, 1)")]
    GainOutOfRange(f64),

    #[error("trial {trial}: {source}")]
    Trial { trial: u64, source: Box<Error> },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
