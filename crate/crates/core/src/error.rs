use thiserror::Error;

/// Errors produced by every toolkit operation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error after {bytes_written} bytes: {source}")]
    Io {
        bytes_written: u64,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file or stream: bad magic, bad header, truncation, unparsable cell.
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input whose values break a contract (non-finite, out of range).
    #[error("data error: {0}")]
    Data(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// Input for which the requested quantity is undefined (zero variance, one cluster).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Two tables that should describe the same images/attributes do not.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("optimization failed at iteration {iteration}: {message}")]
    Optimization { iteration: usize, message: String },
}

impl Error {
    pub(crate) fn io(source: std::io::Error) -> Self {
        Error::Io {
            bytes_written: 0,
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
