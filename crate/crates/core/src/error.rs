use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("expected {expected} channels, got {actual}")]
    WrongChannelCount { expected: &'static str, actual: u8 },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid ground sample distance: {0}")]
    InvalidGeo(String),
    #[error("cannot compute Otsu threshold of an empty image")]
    EmptyImage,
    #[error("perimeter must be positive")]
    ZeroPerimeter,
    #[error("ray center ({x}, {y}) lies outside the {width}x{height} mask")]
    CenterOutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("angular step {0} does not divide 360 degrees")]
    InvalidAngularStep(f64),
    #[error("physical size bounds requested but the image has no ground sample distance")]
    MissingGeo,
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error("invalid grove spec: {0}")]
    InvalidSpec(String),
    #[error("grove spec is infeasible: {0}")]
    SpecInfeasible(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
