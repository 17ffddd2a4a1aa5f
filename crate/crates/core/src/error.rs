use thiserror::Error;

/// Errors raised across the geometry, simulation and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite geometry evaluation at {point:?} (face {face})")]
    NonFiniteGeometry { face: usize, point: Vec<f64> },

    #[error("no exterior probe realized an active-index subset at {0:?}")]
    EmptyScriptI(Vec<f64>),

    #[error("point {0:?} is not on the boundary")]
    NotOnBoundary(Vec<f64>),

    #[error("direction is not in the reflection cone (residual {residual:e})")]
    NotInCone { residual: f64 },

    #[error("boundary sampling produced no points")]
    BoundarySamplingFailed,

    #[error("state {state:?} escaped the working region at controlled time {time}")]
    EscapedWorkingRegion { state: Vec<f64>, time: f64 },

    #[error("non-finite state at controlled time {0}")]
    NonFiniteState(f64),

    #[error("no violated face at {0:?}")]
    NoViolatedFace(Vec<f64>),

    #[error("time {at} outside [0, {end}]")]
    OutOfRange { at: f64, end: f64 },

    #[error("lambda0 never increases on this path")]
    ZeroLambda0,

    #[error("reflection block has a zero resultant direction (|sum| = {0:e})")]
    DegenerateDirection(f64),

    #[error("cell {cell} holds {count} samples, fewer than the required {required}")]
    UnderpopulatedBins {
        cell: usize,
        count: usize,
        required: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
