use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("geometry mismatch: expected {expected}, found {found}")]
    GeometryMismatch { expected: String, found: String },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("malformed manifest {}: {reason}", .path.display())]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("truncated payload {}: expected {expected} bytes, found {found}", .path.display())]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("checksum mismatch: expected {expected}, found {found}")]
    ChecksumMismatch { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing dependency: {stage} ({hint})")]
    MissingDependency { stage: String, hint: String },

    #[error("model not ready: {0}")]
    ModelNotReady(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Debug,
        found: impl std::fmt::Debug,
    ) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        }
    }

    /// Process exit code for the command-line harness: 2 usage, 3 missing
    /// stage dependency, 4 data error, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::InvalidGeometry(_) => 2,
            Error::MissingDependency { .. } => 3,
            Error::GeometryMismatch { .. }
            | Error::ShapeMismatch { .. }
            | Error::NotFound(_)
            | Error::MalformedManifest { .. }
            | Error::TruncatedPayload { .. }
            | Error::StaleCache(_)
            | Error::ChecksumMismatch { .. }
            | Error::Json { .. } => 4,
            _ => 1,
        }
    }
}
