use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of bounds: {detail}")]
    OutOfBounds { what: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("inconsistent frame: {0}")]
    Consistency(String),

    #[error("corrupt payload in {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("external command `{command}` failed: {reason}")]
    External { command: String, reason: String },

    #[error("mixed descriptor kinds: {0}")]
    DescriptorMismatch(String),

    #[error("degenerate registration: {0}")]
    Degenerate(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("unknown combination `{0}`")]
    UnknownCombination(String),

    #[error("frame {frame}, stage {stage}: {source}")]
    Pipeline {
        frame: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, frame: usize, stage: &'static str) -> Self {
        Error::Pipeline {
            frame,
            stage,
            source: Box::new(self),
        }
    }
}
