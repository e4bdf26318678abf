use thiserror::Error;

use crate::dataio::DataError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {got:?}")]
    Shape { expected: String, got: Vec<usize> },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite gradient while attacking {item}: {detail}")]
    NonFiniteGradient { item: String, detail: String },
    #[error("invalid fold plan: {0}")]
    FoldPlan(String),
    #[error("attack failed: {0}")]
    Attack(String),
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("{context} is missing the {axis} axis")]
    MissingAxis { axis: String, context: String },
    #[error("invalid axis spec: {0}")]
    AxisSpec(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
