use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),

    #[error("invalid bar on {date}: {reason}")]
    InvalidBar { date: NaiveDate, reason: String },

    #[error("duplicate date {date} in series `{instrument}`")]
    DuplicateDate { instrument: String, date: NaiveDate },

    #[error("series `{instrument}` has too many malformed rows: {skipped} of {total} skipped")]
    TooManySkipped {
        instrument: String,
        skipped: usize,
        total: usize,
    },

    #[error("series `{0}` has no usable rows")]
    EmptySeries(String),

    #[error("date {date} of `{instrument}` is not a calendar session")]
    NotInCalendar { instrument: String, date: NaiveDate },

    #[error("instrument `{0}` appears more than once")]
    DuplicateInstrument(String),

    #[error("cannot build a calendar from zero series")]
    EmptyCalendar,

    #[error("invalid universe: {0}")]
    InvalidUniverse(String),

    #[error("remote fetch of `{instrument}` failed after {attempts} attempts: {message}")]
    Fetch {
        instrument: String,
        attempts: u32,
        message: String,
    },

    #[error("remote returned an empty payload for `{0}`")]
    EmptyPayload(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid filter model: {0}")]
    InvalidModel(String),

    #[error("non-finite measurement")]
    NonFiniteMeasurement,

    #[error("innovation covariance is numerically singular")]
    SingularInnovation,

    #[error("covariance lost positive semidefiniteness (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("prices must be finite and strictly positive, got close={close}, c_kalman={c_kalman}")]
    NonPositivePrice { close: f64, c_kalman: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("json error: {0}")]
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
