//! Crate-wide error type. Variants are grouped by the failure class they
//! report so callers can match on the condition rather than on text.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix fails the orthonormality / unit-determinant check.
    #[error("rotation matrix is not orthonormal (deviation {deviation:.3e})")]
    InvalidRotation { deviation: f64 },

    /// Depth must be positive and finite to back-project.
    #[error("invalid depth {0}: depth must be positive and finite")]
    InvalidDepth(f64),

    /// Point has non-positive camera-frame z and cannot be projected.
    #[error("point is behind the camera (z = {z:.3e})")]
    BehindCamera { z: f64 },

    /// Continuous coordinate lies outside the sampling domain.
    #[error("coordinate ({u}, {v}) outside raster bounds {width}x{height}")]
    OutOfBounds { u: f64, v: f64, width: usize, height: usize },

    /// Raster too small for the requested stencil.
    #[error("raster {width}x{height} is smaller than the 3x3 stencil")]
    RasterTooSmall { width: usize, height: usize },

    /// Related rasters disagree in shape, or a buffer length does not match
    /// the declared dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Intensity outside [0, 1] or non-finite raster payload.
    #[error("invalid raster value: {0}")]
    InvalidRaster(String),

    /// Focal lengths must be positive and all intrinsics finite.
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    /// Configuration value outside its documented domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Input that is well-formed but carries no usable information
    /// (all depths invalid, zero-norm quaternion, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A sequence operation is missing required entries (gaps in snippet
    /// centers, missing step measurements).
    #[error("incomplete input: {0}")]
    IncompleteInput(String),

    /// Point configuration does not determine the requested transform.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Index past the end of a pose list or trajectory.
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// Text input that does not parse; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Binary input with a malformed or truncated payload.
    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    /// Operation requires at least one trajectory point.
    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
