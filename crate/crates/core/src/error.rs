use thiserror::Error;

pub type Result<T> = std::result::Result<T, LcfError>;

#[derive(Debug, Error)]
pub enum LcfError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: duplicate interaction ({user}, {item}) with deduplication disabled")]
    DuplicateInteraction { line: u64, user: String, item: String },

    #[error("no interactions")]
    NoInteractions,

    #[error("{kind} ordinal {ordinal} out of range (size {len})")]
    OutOfRange { kind: &'static str, ordinal: u32, len: usize },

    #[error("exposure model has no exposure set for item {item}")]
    MissingExposure { item: u32 },

    #[error("exposure set of item {item} does not contain liking user {user}")]
    ExposureViolation { item: u32, user: u32 },

    #[error("exposure set of item {item} is not strictly ascending")]
    UnsortedExposure { item: u32 },

    #[error("click-through rate undefined: empty exposed population for item {item}")]
    UndefinedCtr { item: u32 },

    #[error("ratio undefined: zero denominator ({what})")]
    UndefinedRatio { what: &'static str },

    #[error("operation requires full exposure")]
    UnsupportedExposure,

    #[error("source item {item} is not present in the correlation index")]
    SourceNotInIndex { item: u32 },

    #[error("insufficient data: {have} positive samples, at least {need} required")]
    InsufficientData { have: usize, need: usize },

    #[error("degenerate distribution: all samples are equal")]
    DegenerateDistribution,

    #[error("fold {fold} has no test pairs")]
    DegenerateSplit { fold: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
