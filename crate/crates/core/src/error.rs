use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty measure")]
    EmptyMeasure,

    #[error("pseudo-inverse is 1D only")]
    NotOneDimensional,

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("grid size mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),

    #[error("Wasserstein defined for probability measures (mass {0})")]
    NotProbability(f64),

    #[error("mass mismatch: {0} vs {1}")]
    MassMismatch(f64, f64),

    #[error("Fourier form degenerate at q=2")]
    DegenerateFourier,

    #[error("needs at least two points")]
    TooFewPoints,

    #[error("monotonicity could not be preserved (t = {t}, last dt = {dt:e})")]
    MonotonicityLost { t: f64, dt: f64 },

    #[error("no steady state (mass escapes): datum mass {0} < 1")]
    NoSteadyState(f64),

    #[error("pseudo-inverse left the bound {bound} at t = {t} (max |X| = {max_abs})")]
    Blowup { t: f64, bound: f64, max_abs: f64 },

    #[error("non-finite energy: {0}")]
    NonFiniteEnergy(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
