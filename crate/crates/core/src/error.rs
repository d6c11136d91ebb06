use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
///
/// Variants group into the four failure classes the CLI maps to exit codes:
/// invalid parameters, bad input data, insufficient history, degenerate assets.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("non-positive close {value} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: NaiveDate,
        value: f64,
    },

    #[error("missing {field} for {ticker} on {date}")]
    MissingValue {
        ticker: String,
        field: &'static str,
        date: NaiveDate,
    },

    #[error("no {field} for {ticker} on or before {date}: nothing to carry over")]
    MissingLeadingValue {
        ticker: String,
        field: &'static str,
        date: NaiveDate,
    },

    #[error("no trading dates common to all input tickers")]
    EmptyDateIntersection,

    #[error("insufficient history: need {needed} observations, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("degenerate asset at row {row}: window variance below floor")]
    DegenerateRow { row: usize },

    #[error("degenerate asset {ticker} in window ending {date}: variance below floor")]
    DegenerateAsset { ticker: String, date: NaiveDate },

    #[error("matrix is not symmetric: max asymmetry {max_asymmetry:e}")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("bin supports do not match")]
    MismatchedSupport,

    #[error("negative mass at bin {index}")]
    NegativeMass { index: usize },

    #[error("missing {field} panel required for {indicator}")]
    MissingWeightPanel {
        field: &'static str,
        indicator: &'static str,
    },

    #[error("unknown ticker {0}")]
    UnknownTicker(String),

    #[error("unknown indicator name {0:?}")]
    UnknownIndicator(String),

    #[error("series have no overlapping dates in the requested range")]
    EmptyOverlap,

    #[error("indicator is constant over the calibration range")]
    ConstantIndicator,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
