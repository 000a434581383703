use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid {layer} configuration: {detail}")]
    Config { layer: String, detail: String },

    #[error("unknown layer kind `{0}`")]
    UnknownLayer(String),

    #[error("batch norm in train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),

    #[error("{0}: backward called without a cached forward pass")]
    NoCache(&'static str),

    #[error("layer `{0}` does not support differentiating its input gradient")]
    NoSecondOrder(&'static str),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("target {index} out of range for {classes} classes")]
    TargetOutOfRange { index: usize, classes: usize },

    #[error("invalid loss input: {0}")]
    LossInput(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NnError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NnError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        NnError::Config {
            layer: layer.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NnError>;
