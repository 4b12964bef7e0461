use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding an LVEC latent file.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("bad magic bytes {found:?}, expected \"LVEC\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported LVEC version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid LVEC header: {0}")]
    InvalidHeader(String),
    #[error("truncated LVEC file: header declares {expected} payload bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("LVEC file has {0} trailing bytes after the payload")]
    TrailingBytes(u64),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

/// Failures talking to a generator/embedder backend.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("failed to spawn backend {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("backend handshake failed: {0}")]
    Handshake(String),
    #[error("backend protocol violation: {0}")]
    Protocol(String),
    #[error("backend reported an error: {0}")]
    Remote(String),
    #[error("backend process is gone: {0}")]
    Died(String),
    #[error("unknown sample reference {0:?}")]
    UnknownRef(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("latent set has zero variance")]
    ZeroVariance,
    #[error("embedding has zero norm")]
    ZeroEmbedding,
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("discard fraction {0} retains no pairs")]
    EmptyRetention(f64),
    #[error("density curves have disjoint support")]
    DisjointSupport,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}
