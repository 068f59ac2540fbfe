//! High- and low-frequency decompositions of a patch.
//!
//! The high-frequency map is an isotropic Sobel gradient magnitude; the
//! low-frequency map is an edge-preserving piecewise-smooth approximation.

mod hfm;
mod lfm;

pub use hfm::{hfm, sobel_magnitude, HfMap, SOBEL_X, SOBEL_Y};
pub use lfm::{
    lfm, lfm_energy, lfm_plane, lfm_with_trace, plane_energy, total_variation, LfMap, LfmConfig,
};

use serde::{Deserialize, Serialize};

/// Whether frequency maps are computed per patch or once over the whole
/// image and then tiled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapScope {
    #[default]
    Patch,
    Image,
}
