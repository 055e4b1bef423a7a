use std::path::PathBuf;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ingest error at row {row}: {message}")]
    Ingest { row: usize, message: String },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("table `{0}` not found")]
    MissingTable(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("query column has no non-null values")]
    EmptyQuery,
    #[error("index format: {0}")]
    IndexFormat(String),
    #[error("sketch mismatch: {0}")]
    SketchMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("aggregation: {0}")]
    Aggregation(String),
    #[error("join: {0}")]
    Join(String),
    #[error("model: {0}")]
    Model(String),
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("triplets line {line}: {message}")]
    Triplet { line: usize, message: String },
    #[error("plan format line {line}: {message}")]
    PlanFormat { line: usize, message: String },
    #[error("report: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
