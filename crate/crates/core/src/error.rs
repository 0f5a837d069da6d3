use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("composed distortion loss is negative ({0:e}); composition bug")]
    NegativeLoss(f64),

    #[error("parameter {index} is not owned by worker {worker}")]
    ParamNotOwned { worker: usize, index: usize },

    #[error("all points share every coordinate; no split plane exists")]
    DegenerateSplit,

    #[error("need at least {need} points, got {got}")]
    InsufficientPoints { need: usize, got: usize },

    #[error("point ({x}, {y}, {z}) lies outside the root box")]
    OutOfBounds { x: f64, y: f64, z: f64 },

    #[error("no ray intersects the root box")]
    NoPoints,

    #[error("worker pool is empty")]
    ProtocolMismatch,

    #[error("blend weights sum to {0}, expected 1")]
    WeightMismatch(f64),

    #[error("worker {worker} composed a different result for ray {ray_id}")]
    BroadcastMismatch { worker: usize, ray_id: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
