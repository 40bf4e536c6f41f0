use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    InvalidToken { id: u32, vocab_size: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be >= 1")]
    InvalidOrder,
    #[error("smoothing constant must be > 0, got {0}")]
    InvalidDelta(f64),
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("prompt slot {0} has no binding")]
    MissingSlot(String),
    #[error("unrecognized slot {slot} in template {template}")]
    UnknownSlot { template: String, slot: String },
    #[error("template {0} declares opens_quote but does not end with a quotation mark")]
    MissingOpeningQuote(String),
    #[error("task {task} has no prompting-baseline template")]
    NoPromptingTemplate { task: String },
    #[error("verbalizer word {0:?} does not tokenize without <unk> under the active backend")]
    VerbalizerUnknown(String),
    #[error("continuation is empty")]
    EmptyContinuation,
    #[error("temperature must be > 0, got {0}")]
    InvalidTemperature(f64),
    #[error("top-k filter requires k >= 1")]
    InvalidK,
    #[error("nucleus mass must be in (0, 1], got {0}")]
    InvalidP(f64),
    #[error("debias decay constant must be >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("logit vectors disagree in length: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("distribution has no probability mass")]
    DegenerateDistribution,
    #[error("no entity candidate found in context")]
    NoEntityFound,
    #[error("filter rules require min_tokens < max_tokens")]
    InvalidFilterRules,
    #[error("validation fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("prediction and gold lists differ in length: {predictions} vs {golds}")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("gold answer list is empty")]
    EmptyGolds,
    #[error("reference list is empty")]
    EmptyReferences,
    #[error("corpus must hold at least 2 texts, got {0}")]
    CorpusTooSmall(usize),
    #[error("task mismatch: expected {expected:?}, got {got:?}")]
    TaskMismatch { expected: String, got: String },
    #[error("unknown label {label:?} for task {task}")]
    UnknownLabel { task: String, label: String },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
