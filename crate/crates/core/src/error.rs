use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: String, expected: usize, got: usize },
    #[error("negative value {value} in column `{column}` at row {row}")]
    NegativeValue { column: String, row: usize, value: f64 },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("{0} has zero total")]
    ZeroTotal(&'static str),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("loss `{generator}` is not finite at y = {y}, x = {x}")]
    NonFiniteLoss { generator: String, y: f64, x: f64 },
    #[error("curves live on different grids")]
    GridMismatch,
    #[error("grid must be non-empty and strictly increasing")]
    InvalidGrid,
    #[error("{0} needs a sample flagged as mean-calibrated")]
    NotCalibrated(&'static str),
    #[error("expected a single crossing: {0}")]
    WrongCrossingPattern(String),
    #[error("means differ beyond tolerance: {0} vs {1}")]
    MeanMismatch(f64, f64),
    #[error("the two samples do not share the same response column")]
    ResponseMismatch,
    #[error("binary response needs both classes present")]
    SingleClass,
    #[error("response must be 0 or 1, found {value} at row {row}")]
    NonBinaryResponse { row: usize, value: f64 },
    #[error("invalid mixing measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
