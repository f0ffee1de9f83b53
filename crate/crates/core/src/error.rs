use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pulse timing: {0}")]
    InvalidTiming(String),

    #[error("invalid branch index {0}, expected 1 or 2")]
    InvalidBranch(u8),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("closed-form phase unavailable: {0}")]
    ClosedFormUnavailable(String),

    #[error("grid too small: packet comes within 6 sigma of the boundary at t = {time_s:e} s")]
    GridTooSmall { time_s: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
