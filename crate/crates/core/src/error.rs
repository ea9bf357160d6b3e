use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    Vocabulary { id: usize, vocab_size: usize },
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("masking error: query row {row} has no visible key")]
    Masking { row: usize },
    #[error("distribution error: row {row} sums to {sum}")]
    Distribution { row: usize, sum: f64 },
    #[error("determinism error: two evaluations at the same point gave {first} and {second}")]
    Determinism { first: f64, second: f64 },
    #[error("optimizer error: parameter `{0}` has no gradient")]
    Optimizer(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("ingestion error at record {index}: {message}")]
    Ingestion { index: usize, message: String },
    #[error("query error: {0}")]
    Query(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialisation error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
