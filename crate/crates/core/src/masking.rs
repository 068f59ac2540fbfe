//! Spatial-frequency masking: patch activity and the visibility weight
//! applied to detected banding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Patch;
use crate::scalar::Real;

/// Activity statistics of one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialFreqStats<T> {
    /// RMS of first differences along the first (row) index.
    pub cf: T,
    /// RMS of first differences along the second (column) index.
    pub rf: T,
    /// `sqrt(cf^2 + rf^2)`.
    pub sf: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingParams {
    /// Exponent shaping the boost above the activity threshold.
    pub gamma: f64,
    /// Patch side N.
    pub side: usize,
}

impl Default for MaskingParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            side: crate::imgcore::DEFAULT_PATCH_SIDE,
        }
    }
}

impl MaskingParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma > 0.0 && self.gamma.is_finite() && self.side >= 1 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad masking parameters {self:?}")))
        }
    }
}

/// Column, row and combined spatial frequency of a patch.
///
/// Both sums are normalized by N^2 even though each has N(N-1) terms.
pub fn spatial_freq<T: Real>(patch: &Patch<T>) -> SpatialFreqStats<T> {
    let n = patch.side();
    let data = patch.data();
    // Each sum runs the differenced index innermost, so transposing the
    // patch swaps cf and rf bit-for-bit.
    let mut cf = T::zero();
    for y in 0..n {
        for x in 1..n {
            let d = data[x * n + y] - data[(x - 1) * n + y];
            cf += d * d;
        }
    }
    let mut rf = T::zero();
    for x in 0..n {
        for y in 1..n {
            let d = data[x * n + y] - data[x * n + y - 1];
            rf += d * d;
        }
    }
    let norm = T::lit((n * n) as f64);
    let cf = (cf / norm).sqrt();
    let rf = (rf / norm).sqrt();
    SpatialFreqStats {
        cf,
        rf,
        sf: (cf * cf + rf * rf).sqrt(),
    }
}

/// Activity threshold: the mean spatial frequency over all patches of an image.
pub fn threshold_eps<T: Real>(stats: &[SpatialFreqStats<T>]) -> Result<T> {
    if stats.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: T = stats.iter().map(|s| s.sf).sum();
    Ok(total / T::lit(stats.len() as f64))
}

/// Visibility weight: 1 at or below the threshold, `1 + (sf - eps)^gamma / N` above.
pub fn weight<T: Real>(sf: T, eps: T, params: &MaskingParams) -> T {
    // sf is a root of a sum of squares, so |sf| is sf.
    if sf <= eps {
        T::one()
    } else {
        T::one() + (sf - eps).powf(T::lit(params.gamma)) / T::lit(params.side as f64)
    }
}

/// Per-patch statistics, the image threshold and every patch's weight.
pub fn mask_weights<T: Real>(
    patches: &[Patch<T>],
    params: &MaskingParams,
) -> Result<(Vec<SpatialFreqStats<T>>, T, Vec<T>)> {
    let stats: Vec<_> = patches.iter().map(spatial_freq).collect();
    let eps = threshold_eps(&stats)?;
    let weights = stats.iter().map(|s| weight(s.sf, eps, params)).collect();
    Ok((stats, eps, weights))
}
