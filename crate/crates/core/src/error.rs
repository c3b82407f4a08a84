use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("lookup failed: {0}")]
    Lookup(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("empty scene: layout has no primitives")]
    EmptyScene,
    #[error("degenerate evaluation: no class has a defined IoU")]
    DegenerateEvaluation,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
