use std::path::PathBuf;

/// Errors produced by the rectification library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("face index {0} out of range")]
    InvalidFace(usize),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("no valid data points remain after filtering")]
    NoValidPoints,
    #[error("point behind camera (z = {0})")]
    BehindCamera(f64),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error("parse error in {file}: {msg}")]
    Parse { file: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
