use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the inpainting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The mask covers every pixel, so there is no boundary data to extend.
    #[error("mask covers the entire {height}x{width} frame")]
    FullMask { height: usize, width: usize },

    #[error("frame count mismatch: {frames} frames but {masks} masks")]
    CountMismatch { frames: usize, masks: usize },

    #[error("dimension mismatch: {path} is {actual_w}x{actual_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },

    #[error("weights: {0}")]
    Weights(String),

    #[error("residency budget of {budget} frames cannot hold {required}")]
    Budget { budget: usize, required: usize },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(
    context: &'static str,
    expected: impl std::fmt::Display,
    actual: impl std::fmt::Display,
) -> Error {
    Error::ShapeMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
