use std::path::PathBuf;

use thiserror::Error;

use crate::federation::rsmx::CodecError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad category of a failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Protocol,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid reservoir spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate reservoir: {0}")]
    DegenerateReservoir(String),

    #[error("non-finite input value in column {column}")]
    NonFiniteInput { column: usize },

    #[error("index {index} out of range for dimension {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),

    #[error("{}:{line}: {message}", path.display())]
    Data {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("duplicate message from client {0}")]
    DuplicateClient(u32),

    #[error("missing messages from clients {0:?}")]
    MissingClients(Vec<u32>),

    #[error("unexpected message from client {0}")]
    UnknownClient(u32),

    #[error("message for round {found} in round {expected}")]
    RoundMismatch { expected: u32, found: u32 },

    #[error("payload kind {found} where {expected} was expected")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("reservoir spec of client {0} differs from the federation run")]
    SpecMismatch(u32),

    #[error("no client messages to aggregate")]
    NoMessages,

    #[error("malformed message file name {0}")]
    BadFileName(String),
}

impl Error {
    pub fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidSpec(_) | Error::InvalidParameter(_) => ErrorClass::Config,
            Error::NonFiniteInput { .. }
            | Error::Data { .. }
            | Error::Io { .. }
            | Error::Empty(_)
            | Error::UndefinedMetric(_) => ErrorClass::Data,
            Error::Codec(_) | Error::Protocol(_) => ErrorClass::Protocol,
            Error::DegenerateReservoir(_)
            | Error::IndexOutOfRange { .. }
            | Error::DimensionMismatch { .. }
            | Error::NotPositiveDefinite(_) => ErrorClass::Numerical,
        }
    }
}
