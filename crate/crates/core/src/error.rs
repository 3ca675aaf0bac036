use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coverage calibration failed: {0}")]
    Calibration(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimensions {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("frame {width}x{height} is smaller than the {window}x{window} window")]
    FrameTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("stream span {span_us} us is shorter than the requested {requested_us} us")]
    Span { span_us: u64, requested_us: u64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("checksum mismatch for {}: manifest {expected:016x}, file {actual:016x}", .path.display())]
    Checksum {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported schema version {found} (supported: {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short identifier, used for machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Calibration(_) => "calibration",
            Error::Dimensions { .. } => "dimensions",
            Error::FrameTooSmall { .. } => "frame_too_small",
            Error::Span { .. } => "span",
            Error::Empty(_) => "empty",
            Error::Format { .. } => "format",
            Error::MissingFile(_) => "missing_file",
            Error::Checksum { .. } => "checksum",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
