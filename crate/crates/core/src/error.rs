use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The input is structurally incomplete (missing element, column, property).
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("unknown property name `{0}`")]
    UnknownProperty(String),

    /// A planted-model or scheme term refers to a label that does not exist.
    #[error("construction error: label `{0}` is not produced by the descriptor scheme")]
    UnknownLabel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("factorization failed ({0}); increase the ridge strength lambda")]
    Factorization(String),

    #[error("all {attempted} grid points failed:\n{log}")]
    GridSearch { attempted: usize, log: String },

    #[error("support of size {size} exceeds the exhaustive-search guard {guard}; raise lambda or lower the support cap")]
    SupportTooLarge { size: usize, guard: usize },

    #[error("configuration error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("missing artifacts:\n{}", .0.iter().map(|p| format!("  {}", p.display())).collect::<Vec<_>>().join("\n"))]
    MissingArtifacts(Vec<PathBuf>),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Attach the pipeline stage name to an error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than a numerical or I/O failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::UnknownProperty(_)
            | Error::UnknownLabel(_)
            | Error::InvalidInput(_)
            | Error::Config { .. }
            | Error::MissingFile(_)
            | Error::MissingArtifacts(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
