use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty manifest")]
    EmptyManifest,

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("{file}: unsupported format version {found} (expected {expected})")]
    Version {
        file: String,
        found: u32,
        expected: u32,
    },

    #[error("{file}: checksum mismatch")]
    Checksum { file: String },

    #[error("{file}: corrupt data: {message}")]
    Corrupt { file: String, message: String },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
