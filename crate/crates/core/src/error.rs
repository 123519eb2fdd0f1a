use thiserror::Error;

/// Errors raised by the planning library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid frame index {0}")]
    InvalidFrame(usize),
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("inverse kinematics did not converge after {restarts} restarts")]
    IkNoConvergence { restarts: usize },
    #[error("planner failed: {0}")]
    PlanningFailed(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cloud parse error at line {line}: {message}")]
    CloudParse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
