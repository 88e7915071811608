use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("raster {h}x{w} is smaller than the {window}x{window} region window")]
    RasterTooSmall { h: usize, w: usize, window: usize },

    #[error("pixel ({row}, {col}) is outside the {h}x{w} raster")]
    PixelOutOfBounds { row: usize, col: usize, h: usize, w: usize },

    #[error("object {0} is not present in the scene")]
    ObjectAbsent(u32),

    #[error("input contains non-finite values")]
    NonFiniteInput,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset needs at least {needed} samples, got {got}")]
    DatasetTooSmall { needed: usize, got: usize },

    #[error("corrupt header in {path}: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload { path: PathBuf, expected: usize, found: usize },

    #[error("manifest mismatch in {path}: {reason}")]
    ManifestMismatch { path: PathBuf, reason: String },

    #[error("box reported empty")]
    EmptyBox,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
