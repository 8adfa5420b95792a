use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("layer {index} ({kind}): expected input shape {expected}, got {actual:?}")]
    LayerInput {
        index: usize,
        kind: &'static str,
        expected: String,
        actual: Vec<usize>,
    },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("non-finite gradient in parameter group {group} at element {index}")]
    NonFiniteGradient { group: usize, index: usize },
    #[error("invalid layer specification: {0}")]
    InvalidLayer(String),
    #[error("condition labels required by layer {0}")]
    MissingCondition(usize),
    #[error("condition label {label} out of range (num_conditions = {num_conditions})")]
    ConditionOutOfRange { label: usize, num_conditions: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch moments need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
