use thiserror::Error;

use crate::rulelang::RuleError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid quantization spec: {0}")]
    QuantSpec(String),

    #[error(transparent)]
    Rule(#[from] RuleError),

    #[error("trace value {value} outside [{lo}, {hi}]")]
    TraceRange {
        value: String,
        lo: String,
        hi: String,
    },

    #[error("step index {got} does not match scheduler position {expected}")]
    StepOrder { expected: usize, got: usize },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated {
        needed: usize,
        offset: usize,
        len: usize,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
