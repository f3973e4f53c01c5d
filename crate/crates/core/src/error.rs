use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Geometry(String),

    #[error("degenerate look-at up vector")]
    DegenerateLookAt,

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("malformed scene file: {0}")]
    MalformedScene(String),

    #[error("unknown model id: {0}")]
    UnknownModel(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid mesh {path}: {reason}")]
    InvalidMesh { path: String, reason: String },

    #[error("placement overflow: {0}")]
    PlacementOverflow(String),

    #[error("invalid COCO: {0}")]
    InvalidCoco(String),

    #[error("duplicate image id {0}")]
    DuplicateImageId(u64),

    #[error("no ground truth annotations")]
    NoGroundTruth,

    #[error("mask dimension mismatch: {0}x{1} vs {2}x{3}")]
    MaskDimensionMismatch(usize, usize, usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the input data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
