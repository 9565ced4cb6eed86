use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: duplicate rating for rater '{rater}' and item '{item}'")]
    DuplicateRating { line: u64, rater: String, item: String },

    #[error("line {line}: rater '{rater}' labelled '{found}' but earlier rows say '{expected}'")]
    GroupConflict {
        line: u64,
        rater: String,
        expected: String,
        found: String,
    },

    #[error("line {line}: group '{group}' is not in the configured whitelist")]
    UnknownGroupLabel { line: u64, group: String },

    #[error("unknown group '{0}'")]
    UnknownGroup(String),

    #[error("unknown rater '{0}'")]
    UnknownRater(String),

    #[error("unknown item '{0}'")]
    UnknownItem(String),

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("rater '{rater}' has density {current:.6}, below the requested target {target:.6}")]
    TargetAboveDensity {
        rater: String,
        current: f64,
        target: f64,
    },

    #[error("rater '{rater}' has {available} ratings, {requested} requested for holdout")]
    InsufficientRatings {
        rater: String,
        available: usize,
        requested: usize,
    },

    #[error("no outgoing advice weight for {0}")]
    ZeroOutgoingWeight(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("synthetic spec line {line}: {message}")]
    SpecParse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
