use std::path::PathBuf;

use thiserror::Error;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate stroke: all points coincide")]
    DegenerateStroke,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("glyph has no ink")]
    EmptyGlyph,
    #[error("trajectory lies off the canvas ({on_canvas:.0}% of ink visible)")]
    OffCanvas { on_canvas: f64 },
    #[error("augmentation produced a degenerate {width}x{height} image")]
    DegenerateOutput { width: usize, height: usize },
    #[error("cannot compose an empty line")]
    EmptyLine,
    #[error("no pool for class {class} with source {origin}")]
    PoolExhausted { class: String, origin: String },
    #[error("reference sequence is empty")]
    EmptyReference,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("line width {line} is narrower than the narrowest prototype ({prototype})")]
    LineTooNarrow { line: usize, prototype: usize },
    #[error("class directory {0} contains no images")]
    MissingClass(PathBuf),
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("cannot decode image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },
    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),
    #[error("unsupported format version {0}")]
    FormatVersion(u32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::FormatVersion(_) => ErrorKind::Config,
            Error::ImageDecode { .. }
            | Error::MissingClass(_)
            | Error::EmptyGlyph
            | Error::EmptyReference
            | Error::EmptyCorpus
            | Error::EmptyLine
            | Error::PoolExhausted { .. }
            | Error::Checksum(_)
            | Error::Json(_)
            | Error::InsufficientData(_)
            | Error::LineTooNarrow { .. } => ErrorKind::Data,
            // missing or unreadable inputs are the caller's data
            Error::Io { source, .. }
                if matches!(
                    source.kind(),
                    std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidData
                ) =>
            {
                ErrorKind::Data
            }
            _ => ErrorKind::Runtime,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
