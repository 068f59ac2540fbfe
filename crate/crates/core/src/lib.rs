//! Frequency-sensitive banding detection.
//!
//! An image is tiled into patches; each patch is decomposed into a
//! high-frequency (Sobel magnitude) and a low-frequency (piecewise-smooth)
//! map; a dual-branch CNN classifies patches as banded; detected banding is
//! weighted by spatial-frequency masking into a pixel-wise banding map and
//! pooled over the worst values into an image score.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`). The aliases
//! below fix the scalar for the common cases: `f32` for inference and
//! training, `f64` for precise analysis.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod freqmaps;
pub mod imgcore;
pub mod masking;
pub mod metric;
pub mod net;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Image32 = imgcore::Image<f32>;
pub type Image64 = imgcore::Image<f64>;
pub type Patch32 = imgcore::Patch<f32>;
pub type Patch64 = imgcore::Patch<f64>;
pub type Model32 = net::Model<f32>;
pub type Model64 = net::Model<f64>;
