use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("non-positive price {value} for asset {asset} on {date}")]
    NonPositivePrice {
        asset: String,
        date: String,
        value: f64,
    },

    #[error("only {remaining} asset(s) left after cleaning, need at least 2")]
    TooFewAssets { remaining: usize },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error(
        "panel spans {available} calendar month(s) but in_sample_months={in_sample_months} \
         plus step_months={step_months} are required"
    )]
    PanelTooShort {
        available: usize,
        in_sample_months: usize,
        step_months: usize,
    },

    #[error("asset {asset} has zero sample variance")]
    ZeroVariance { asset: String },

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("threshold {threshold} outside value range [{lo}, {hi}]")]
    ThresholdOutOfRange { threshold: f64, lo: f64, hi: f64 },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semidefinite (minimum eigenvalue below {bound:e})")]
    NotPositiveSemidefinite { bound: f64 },

    #[error("matrix is singular or near-singular (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error(
        "solver did not reach KKT tolerance after {iterations} iterations \
         (residual {residual:e})"
    )]
    NoConvergence {
        best: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("statistic undefined: {0}")]
    Undefined(&'static str),

    #[error("window {window_id}: {source}")]
    Window {
        window_id: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
