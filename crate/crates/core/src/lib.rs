//! Dual-domain modulation network for lightweight image super-resolution.
//!
//! A from-scratch f32 stack: a tape-based reverse-mode autodiff engine over
//! dense 4-D tensors, orthonormal Haar wavelet and 2-D Fourier transforms,
//! the spatial/wavelet attention blocks, the full model with parameter and
//! FLOP accounting, dual-domain (pixel + frequency) training, and a
//! Y-channel PSNR/SSIM evaluation harness.

pub mod blocks;
pub mod checkpoint;
pub mod fourier;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod training;
pub mod wavelet;

pub use tensor::{Shape, Tensor};

use std::fmt;

/// Errors surfaced by the library.
#[derive(Debug)]
pub enum Error {
    /// An operation received tensors whose dimensions do not fit together.
    ShapeMismatch { op: &'static str, detail: String },
    /// A parameter or configuration value is out of its valid range.
    Invalid(String),
    /// A numeric result left the finite range (training divergence, bad input).
    NonFinite(String),
    /// A checkpoint could not be read or fails validation.
    Checkpoint(String),
    /// Underlying file I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::Invalid(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for constructing a `ShapeMismatch` error.
pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::ShapeMismatch { op, detail: detail.into() }
}
