use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("sequence of {t} frames exceeds the model maximum {max}")]
    TooLong { t: usize, max: usize },
    #[error("prompt of {0} tokens exceeds the encoder maximum")]
    TooManyTokens(usize),
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint was written for vocabulary {found}, expected {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("overhead ordering violated: {0}")]
    OrderingViolated(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Motion(#[from] umo_core::motion::MotionError),
    #[error(transparent)]
    Task(#[from] umo_core::tasks::TaskError),
    #[error(transparent)]
    Prompt(#[from] umo_core::prompt::PromptError),
    #[error(transparent)]
    Metric(#[from] umo_core::metrics::MetricError),
    #[error(transparent)]
    Dataset(#[from] umo_core::dataset::DatasetError),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

pub(crate) fn shape_err(expected: (usize, usize), got: (usize, usize)) -> NnError {
    NnError::ShapeMismatch { expected: format!("{}x{}", expected.0, expected.1), got: format!("{}x{}", got.0, got.1) }
}
