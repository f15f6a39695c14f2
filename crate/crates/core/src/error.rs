use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("color channel out of range: {0}")]
    ColorRange(String),

    #[error("non-unit direction (|v| = {0})")]
    NonUnitDirection(f64),

    #[error("degenerate SDF gradient at ({0:.4}, {1:.4}, {2:.4})")]
    DegenerateNormal(f64, f64, f64),

    #[error("shading point faces away from viewer (n.wo = {0})")]
    BackfacingView(f64),

    #[error("non-finite loss at step {step}: {diagnostic}")]
    NonFiniteLoss { step: usize, diagnostic: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("resolution mismatch: frame {path} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    ResolutionMismatch {
        path: String,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("edit spec error: {0}")]
    EditSpec(String),

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
