use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cutoff {cutoff} Hz is not below the Nyquist frequency {nyquist} Hz")]
    AboveNyquist { cutoff: f64, nyquist: f64 },

    #[error("lane index {lane} outside layout with {lane_count} lanes")]
    LaneOutOfRange { lane: i32, lane_count: usize },

    #[error("gradient criterion unavailable: trajectory {0} has no lane-marking distance channels")]
    GradientUnavailable(u64),

    #[error("corpus has no ground-truth events")]
    NoGroundTruth,

    #[error("vehicle {0} not present in scenario")]
    MissingVehicle(u64),

    #[error("scenario is missing the `{0}` role")]
    MissingRole(&'static str),

    #[error("engagement precondition violated: {0}")]
    EngagementPrecondition(String),

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: String, reason: String },

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("config key `{key}`: {reason}")]
    ConfigValue { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
