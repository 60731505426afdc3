use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid network: {0}")]
    Invalid(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("ragged feature width at month {month}: expected {expected}, found {found} (node {node})")]
    RaggedWidth {
        month: usize,
        expected: usize,
        found: usize,
        node: String,
    },

    #[error("unknown node {node} referenced by an edge at month {month}")]
    UnknownNode { month: usize, node: String },

    #[error("monotonicity violated: {0}")]
    Monotonicity(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Displays the wrapped error inline and does not expose it as a
    /// `source`, so error chains do not print it twice.
    #[error("{context}: {inner}")]
    Context { context: String, inner: Box<Error> },

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            inner: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
