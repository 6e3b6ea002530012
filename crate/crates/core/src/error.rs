use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    /// `row` is the 1-based data row (header excluded), `col` the 1-based column.
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("record has no samples")]
    EmptyRecord,

    #[error("unknown label {0:?} (expected \"APC\" or \"NonAPC\")")]
    Label(String),

    #[error("duplicate record id {0:?}")]
    Duplicate(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("cut-off {high} Hz is not below the Nyquist frequency {nyquist} Hz")]
    Nyquist { high: f64, nyquist: f64 },

    #[error("unknown lead {0:?}")]
    UnknownLead(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("index {index} out of bounds for {len} frames")]
    Bounds { index: usize, len: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("sequencing error: expected a {expected} model, found {found}")]
    Sequencing { expected: String, found: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("confusion matrix is empty")]
    EmptyMatrix,

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
