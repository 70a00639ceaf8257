use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid action triplet {0:?}: {1}")]
    Triplet([i32; 3], String),

    #[error("lexicon has no entry for {0}")]
    Lexicon(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite statistics: {0}")]
    NonFinite(String),

    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),

    #[error("non-finite loss {value} at iteration {iteration}")]
    Divergence { iteration: usize, value: f64 },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("train/test overlap: {0} clip(s) appear in both sets")]
    Overlap(usize),

    #[error(transparent)]
    Candle(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Safetensors(#[from] safetensors::SafeTensorError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
