use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    /// Kernel evaluated at a time where it has no pointwise value.
    #[error("singular time t = {t}")]
    SingularTime { t: f64 },

    #[error(
        "under-resolved grid: kernel phase increment {max_increment:.3} rad per sample \
         exceeds {limit:.3}; use at least N = {suggested_n}"
    )]
    UnderResolvedGrid {
        max_increment: f64,
        limit: f64,
        suggested_n: usize,
    },

    #[error("non-finite state encountered after t = {last_valid_time}")]
    BlowUp { last_valid_time: f64 },

    #[error("caustic crossing: condition number {condition:.3e} of the width denominator")]
    CausticCrossing { condition: f64 },

    #[error("grid misalignment: shift {shift} is not a multiple of dx = {dx}")]
    GridMisalignment { shift: f64, dx: f64 },

    #[error("degenerate state: norm^2 = {norm2:e}")]
    DegenerateState { norm2: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("unbounded region")]
    UnboundedRegion,

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
