use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("non-deterministic function: {0}")]
    Determinism(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupted checkpoint: {0}")]
    Corruption(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
