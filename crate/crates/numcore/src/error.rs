use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("empty logits")]
    EmptyLogits,
    #[error("target id {target} out of range for {size} logits")]
    TargetOutOfRange { target: usize, size: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("finite-difference step {0} outside [1e-6, 1e-3]")]
    BadStep(f64),
}
