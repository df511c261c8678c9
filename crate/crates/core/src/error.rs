use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("target unreachable: distance {distance:.6} outside [{min:.6}, {max:.6}]")]
    Unreachable { distance: f64, min: f64, max: f64 },
    #[error("no feasible grasp found after {samples} samples")]
    NoGraspFound { samples: usize },
    #[error("planning failed: {0}")]
    PlanningFailed(String),
    #[error("demonstration generation failed: {0}")]
    GenerationFailed(String),
    #[error("epoch aborted: {0}")]
    AbortEpoch(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
