use std::f64::consts::SQRT_2;

use crate::imgcore::{reflect_index, Patch};
use crate::scalar::Real;

/// Horizontal isotropic Sobel kernel (row-major, unnormalized).
pub const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-SQRT_2, 0.0, SQRT_2], [-1.0, 0.0, 1.0]];

/// Vertical isotropic Sobel kernel, the transpose of [`SOBEL_X`].
pub const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -SQRT_2, -1.0], [0.0, 0.0, 0.0], [1.0, SQRT_2, 1.0]];

/// Gradient-magnitude map of a patch; same shape as the patch, all values >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HfMap<T> {
    pub side: usize,
    pub data: Vec<T>,
}

/// High-frequency map of a patch.
pub fn hfm<T: Real>(patch: &Patch<T>) -> HfMap<T> {
    let side = patch.side();
    HfMap {
        side,
        data: sobel_magnitude(patch.data(), side, side),
    }
}

/// `sqrt((I*Sx)^2 + (I*Sy)^2)` over a `width`×`height` plane with
/// symmetric-reflect borders.
///
/// Kernels are applied as correlations; the flip a true convolution would
/// apply only negates each response, which the magnitude discards.
pub fn sobel_magnitude<T: Real>(data: &[T], width: usize, height: usize) -> Vec<T> {
    assert_eq!(data.len(), width * height);
    let root2 = T::SQRT_2();
    let mut out = Vec::with_capacity(data.len());
    for r in 0..height {
        let [up, mid, down] = [-1isize, 0, 1].map(|d| reflect_index(r as isize + d, height) * width);
        for c in 0..width {
            let [left, centre, right] = [-1isize, 0, 1].map(|d| reflect_index(c as isize + d, width));
            // Paired differences cancel exactly on flat input.
            let gx = (data[up + right] - data[up + left])
                + root2 * (data[mid + right] - data[mid + left])
                + (data[down + right] - data[down + left]);
            let gy = (data[down + left] - data[up + left])
                + root2 * (data[down + centre] - data[up + centre])
                + (data[down + right] - data[up + right]);
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}
