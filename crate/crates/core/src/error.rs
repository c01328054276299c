use chrono::NaiveDate;
use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("non-positive price {price} on {date}")]
    NonPositivePrice { date: NaiveDate, price: f64 },
    #[error("empty series")]
    EmptySeries,
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("window of {window} does not fit a series of length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("invalid filter size {0}: must be at least 2")]
    InvalidFilterSize(usize),
    #[error("crossing level must be positive, got {0}")]
    NonPositiveRho(f64),
    #[error("no uncensored hitting times on the {0} side")]
    EmptySide(&'static str),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("adaptation failed on chain {chain}: mean acceptance {accept:.3}")]
    AdaptationFailed { chain: usize, accept: f64 },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate sample sizes: N+ = {0}, N- = {1}")]
    DegenerateSampleSizes(usize, usize),
    #[error("too few samples: need {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("degenerate chains: {0}")]
    DegenerateChains(String),
    #[error("censoring fraction {0:.4} exceeds the allowed 1%")]
    ExcessCensoring(f64),
    #[error("malformed report: {0}")]
    MalformedReport(String),
}

pub type Result<T> = std::result::Result<T, Error>;
