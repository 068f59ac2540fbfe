//! Batched kernels. Activations use a channel-major `(C, B, H, W)` layout so
//! a whole mini-batch is one matrix product per layer.

use crate::scalar::{gemm, Op, Real};

/// Output side of a 3×3, stride-2, pad-1 convolution.
#[inline]
pub(crate) fn conv_out(side: usize) -> usize {
    side.div_ceil(2)
}

/// Unfolds `(C, B, H, W)` into a `(C*9) × (B*Ho*Wo)` patch matrix.
pub(crate) fn im2col<T: Real>(input: &[T], c: usize, b: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (conv_out(h), conv_out(w));
    let ncols = b * ho * wo;
    let mut cols = vec![T::zero(); c * 9 * ncols];
    for ch in 0..c {
        for ki in 0..3 {
            for kj in 0..3 {
                let row = &mut cols[((ch * 9) + ki * 3 + kj) * ncols..][..ncols];
                for bi in 0..b {
                    let plane = &input[(ch * b + bi) * h * w..][..h * w];
                    for oy in 0..ho {
                        let y = (2 * oy + ki) as isize - 1;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let src = &plane[y as usize * w..][..w];
                        let dst = &mut row[(bi * ho + oy) * wo..][..wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let x = (2 * ox + kj) as isize - 1;
                            if x >= 0 && x < w as isize {
                                *d = src[x as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto the input.
pub(crate) fn col2im<T: Real>(cols: &[T], c: usize, b: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (conv_out(h), conv_out(w));
    let ncols = b * ho * wo;
    let mut out = vec![T::zero(); c * b * h * w];
    for ch in 0..c {
        for ki in 0..3 {
            for kj in 0..3 {
                let row = &cols[((ch * 9) + ki * 3 + kj) * ncols..][..ncols];
                for bi in 0..b {
                    let plane = &mut out[(ch * b + bi) * h * w..][..h * w];
                    for oy in 0..ho {
                        let y = (2 * oy + ki) as isize - 1;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[y as usize * w..][..w];
                        let src = &row[(bi * ho + oy) * wo..][..wo];
                        for (ox, s) in src.iter().enumerate() {
                            let x = (2 * ox + kj) as isize - 1;
                            if x >= 0 && x < w as isize {
                                dst[x as usize] += *s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `out (O × N) = weight (O × K) · cols (K × N) + bias`, rows of `out` being channels.
pub(crate) fn affine_rows<T: Real>(
    weight: &[T],
    bias: &[T],
    cols: &[T],
    k: usize,
    n: usize,
) -> Vec<T> {
    let o = bias.len();
    let mut out = vec![T::zero(); o * n];
    for (row, &b) in out.chunks_mut(n.max(1)).zip(bias) {
        row.fill(b);
    }
    gemm(o, k, n, weight, Op::N, cols, Op::N, &mut out, true);
    out
}

pub(crate) fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if *v <= T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose activation was clipped by ReLU.
pub(crate) fn relu_backward<T: Real>(grad: &mut [T], activated: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Gradients of an affine map `out = W · x + b` given `d_out (O × N)` and the
/// saved input `x (K × N)`. Accumulates into `d_weight` and `d_bias` and
/// optionally returns `d_x (K × N)`.
pub(crate) fn affine_rows_backward<T: Real>(
    weight: &[T],
    x: &[T],
    d_out: &[T],
    k: usize,
    n: usize,
    d_weight: &mut [T],
    d_bias: &mut [T],
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let o = d_bias.len();
    gemm(o, n, k, d_out, Op::N, x, Op::T, d_weight, true);
    for (db, row) in d_bias.iter_mut().zip(d_out.chunks(n.max(1))) {
        *db += row.iter().copied().sum::<T>();
    }
    want_input_grad.then(|| {
        let mut dx = vec![T::zero(); k * n];
        gemm(k, o, n, weight, Op::T, d_out, Op::N, &mut dx, false);
        dx
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 3×3 stride-2 zero-padded convolution for one channel pair.
    fn direct(input: &[f64], h: usize, w: usize, k: &[f64; 9]) -> Vec<f64> {
        let (ho, wo) = (conv_out(h), conv_out(w));
        let mut out = vec![0.0; ho * wo];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = 0.0;
                for ki in 0..3 {
                    for kj in 0..3 {
                        let y = (2 * oy + ki) as isize - 1;
                        let x = (2 * ox + kj) as isize - 1;
                        if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                            s += k[ki * 3 + kj] * input[y as usize * w + x as usize];
                        }
                    }
                }
                out[oy * wo + ox] = s;
            }
        }
        out
    }

    #[test]
    fn im2col_product_is_strided_convolution() {
        let (h, w) = (7, 6);
        let input: Vec<f64> = (0..h * w).map(|i| (i as f64 * 0.3).sin()).collect();
        let k = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9];
        let cols = im2col(&input, 1, 1, h, w);
        let out = affine_rows(&k, &[0.0], &cols, 9, conv_out(h) * conv_out(w));
        let want = direct(&input, h, w, &k);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_the_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, b, h, w) = (2, 3, 5, 4);
        let x: Vec<f64> = (0..c * b * h * w).map(|i| (i as f64 * 0.7).cos()).collect();
        let cols = im2col(&x, c, b, h, w);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.11).sin()).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, c, b, h, w);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
