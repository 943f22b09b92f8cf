use std::path::PathBuf;

/// Errors raised anywhere in the mapping pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("empty intersection between source and destination grids")]
    EmptyIntersection,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("band count mismatch: expected {expected}, got {got} for {what}")]
    BandCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("band {0} contains no valid pixels")]
    AllNodata(usize),
    #[error("crop size {size} exceeds tile {width}x{height}")]
    CropTooLarge {
        size: usize,
        width: usize,
        height: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no supervised pixels in batch")]
    NoSupervisedPixels,
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("kappa undefined: expected agreement equals 1")]
    KappaUndefined,
    #[error("empty confusion matrix")]
    EmptyConfusion,
    #[error("no building pixels in prediction")]
    NoBuildingPixels,
    #[error("value {0} outside palette domain")]
    PaletteDomain(f32),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
