use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate component id `{0}`")]
    DuplicateComponent(String),

    #[error("missing required parameter `{0}`")]
    MissingParameter(String),

    #[error("parameter `{0}` is both researcher-specified and real-data-based")]
    ParameterInBoth(String),

    #[error("component `{0}` is known but flagged as target-related")]
    TargetOnKnown(String),

    #[error("parameter `{id}` is not used by the {family} family")]
    UnexpectedParameter { id: String, family: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("criterion `{criterion}` references undeclared metadata key `{key}`")]
    UndeclaredKey { criterion: String, key: String },

    #[error("estimator `{estimator}` failed on dataset `{dataset}`: {reason}")]
    Estimator {
        estimator: String,
        dataset: String,
        reason: String,
    },

    #[error("subset rules on `{record}`: {reason}")]
    SubsetRule { record: String, reason: String },

    #[error("distribution fit failed: {0}")]
    FitFailed(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("unknown validity predicate `{0}`")]
    UnknownPredicate(String),

    #[error("insufficient rows: {available} remain after filtering, {required} required")]
    InsufficientRows { available: usize, required: usize },

    #[error("all {0} repetitions failed")]
    AllFailed(usize),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
