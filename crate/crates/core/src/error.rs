use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by `clpu-core` operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("non-uniform spacing at line {line}: {reason}")]
    NonUniformSpacing { line: usize, reason: String },
    #[error("input contains no data rows")]
    EmptyFile,
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("series of length {len} is too short for differencing order {d}")]
    InsufficientLength { len: usize, d: usize },
    #[error("expected {expected} seed values, got {got}")]
    SeedLengthMismatch { expected: usize, got: usize },
    #[error("series does not span a complete calendar day")]
    NoCompleteDay,
    #[error("series has zero variance")]
    ConstantSeries,
    #[error("lag {lag} is too large for a series of length {len}")]
    LagTooLarge { lag: usize, len: usize },
    #[error("series of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("series of length {len} is too short for this model (need at least {min})")]
    SeriesTooShort { len: usize, min: usize },
    #[error("order ({p},{d},{q}) exceeds limits ({p_limit},{d_limit},{q_limit})")]
    OrderOutOfBounds {
        p: usize,
        d: usize,
        q: usize,
        p_limit: usize,
        d_limit: usize,
        q_limit: usize,
    },
    #[error("history of length {len} is insufficient (need at least {min})")]
    InsufficientHistory { len: usize, min: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("invalid horizon {r_max} (allowed 1..={cap})")]
    InvalidHorizon { r_max: usize, cap: usize },
    #[error("no grid cell produced a converged fit")]
    NoConvergedCell,
    #[error("peak history ends {last}, more than {limit_days} days before {asof}")]
    StaleHistory {
        last: chrono::NaiveDate,
        asof: chrono::NaiveDate,
        limit_days: i64,
    },
    #[error("peak estimate {peak_kw:.4} kW is at or below the {floor_kw} kW floor; duration undefined")]
    ZeroPeak { peak_kw: f64, floor_kw: f64 },
    #[error("invalid thermal parameters: {0}")]
    InvalidParams(String),
    #[error("outdoor temperature series does not cover {0}")]
    CoverageGap(chrono::DateTime<chrono::Utc>),
    #[error("method {0} needs an aligned temperature series")]
    MissingExogenous(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
