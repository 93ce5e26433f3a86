use std::path::PathBuf;

use thiserror::Error;

use crate::data::{Province, Stream, YearMonth};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("gap in {province}/{stream}: missing month {missing}")]
    Gap {
        province: Province,
        stream: Stream,
        missing: YearMonth,
    },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate MASE denominator (naive errors sum to zero)")]
    DegenerateDenominator,

    #[error("fit error: {0}")]
    Fit(String),

    #[error("inconsistent evidence: {0}")]
    InconsistentEvidence(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("malformed evidence: {0}")]
    Evidence(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than numerics or usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Gap { .. }
                | Error::Value(_)
                | Error::Range(_)
                | Error::Fit(_)
        )
    }
}
