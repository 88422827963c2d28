use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{group} group is empty")]
    EmptyGroup { group: &'static str },

    #[error("non-finite {what} at record {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("linear system not solved to tolerance (relative residual {residual:e})")]
    Singular { residual: f64 },

    #[error("training failed in run {run}: {source}")]
    Training {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fold {fold} leaves a single membership class for fitting")]
    SingleClassFold { fold: usize },

    #[error("scores are not normalized to [0, 1]; call `min_max_normalized` first")]
    NotNormalized,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
