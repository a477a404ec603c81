use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's contract (shape mismatch, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("scenario not applicable: {0}")]
    ScenarioInapplicable(String),

    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("injection error: {0}")]
    Injection(String),

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("training error: {0}")]
    Training(String),

    /// IPTW cannot be evaluated, e.g. a propensity score of exactly 0 or 1.
    #[error("computation error: {0}")]
    Computation(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
