use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: expected {expected} bytes, found {actual}")]
    ShortFile {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("bitstream error at bit {bit_offset}: {msg}")]
    Bitstream { bit_offset: u64, msg: String },

    #[error("bitstream error in CTU {ctu}: {source}")]
    Ctu {
        ctu: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("evaluation error: {0}")]
    Evaluation(String),
}

impl Error {
    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn bits(bit_offset: u64, msg: impl Into<String>) -> Self {
        Error::Bitstream {
            bit_offset,
            msg: msg.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Evaluation(_) => 2,
            Error::Io { .. } | Error::ShortFile { .. } | Error::Format(_) => 3,
            Error::Bitstream { .. } | Error::Ctu { .. } => 4,
            Error::Config(_) => 5,
            Error::Diverged { .. } => 6,
        }
    }
}
