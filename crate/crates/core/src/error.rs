use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("space has no points")]
    EmptySpace,
    #[error("mass at atom {index} must be positive and finite, got {mass}")]
    NonPositiveMass { index: usize, mass: f64 },
    #[error("distance matrix is not a metric: {0}")]
    NotAMetric(String),
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("invalid segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("invalid ball: {0}")]
    InvalidBall(String),
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("set {index} of the family has zero measure")]
    ZeroMeasure { index: usize },
    #[error("base set {index} is not contained in its ball")]
    NotContained { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operation requires the {0} backend")]
    WrongBackend(&'static str),
    #[error("input too large: {what} is {got}, limit {limit}")]
    TooLarge { what: &'static str, got: usize, limit: usize },
    #[error("search budget must be positive")]
    ZeroBudget,
    #[error("cannot parse number {0:?}")]
    BadNumber(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
