use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter order violated: a_brake_min ({a_brake_min}) must be < a_brake_max ({a_brake_max})")]
    OrderViolation { a_brake_min: f64, a_brake_max: f64 },

    #[error("parameter `{name}` must be > 0, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("parameter `{name}` must be >= 0, got {value}")]
    Negative { name: &'static str, value: f64 },

    #[error("`{name}` is not a finite number: {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid time step: {0}")]
    Step(String),

    #[error("cannot classify an empty trace")]
    Classify,

    #[error("supervisor invariant breached: {0}")]
    InvariantBreach(String),

    #[error("start state violates the safety condition (margin {margin:.6} m)")]
    UnsafeStart { margin: f64 },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("trajectory contains no collision")]
    NoCollision,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { name, value })
    }
}
