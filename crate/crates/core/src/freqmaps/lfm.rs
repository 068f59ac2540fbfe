//! Piecewise-smooth approximation by phase-field alternating minimization.
//!
//! The free-discontinuity objective
//!
//! ```text
//! F(L, E) = 1/2 sum (I - L)^2 + alpha * sum_{outside E} |grad L|^2 + beta * |E|
//! ```
//!
//! is relaxed by replacing the edge set with a field `v` in `[0, 1]`:
//!
//! ```text
//! F(L, v) = 1/2 sum (I - L)^2
//!         + alpha * sum (1 - v)^2 |grad L|^2
//!         + beta  * sum (eps |grad v|^2 + v^2 / (4 eps))
//! ```
//!
//! Gradients are forward differences with zero flux past the last row and
//! column. `F` is a convex quadratic in each variable separately, so
//! Gauss-Seidel coordinate sweeps on `v` and then on `L` are exact
//! coordinate minimizations and the energy never increases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Patch;
use crate::scalar::Real;

/// Solver parameters for the low-frequency map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfmConfig {
    /// Smoothness weight.
    pub alpha: f64,
    /// Edge-length weight.
    pub beta: f64,
    /// Maximum number of alternating sweeps.
    pub iterations: usize,
    /// Stop once no pixel of `L` or `v` moves by more than this.
    pub tol: f64,
    /// Phase-field transition width in pixels.
    pub edge_width: f64,
}

impl Default for LfmConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 0.02,
            iterations: 60,
            tol: 1e-4,
            edge_width: 1.0,
        }
    }
}

impl LfmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta > 0.0
            && self.iterations >= 1
            && self.tol > 0.0
            && self.edge_width > 0.0
            && [self.alpha, self.beta, self.tol, self.edge_width]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad LFM parameters {self:?}")))
        }
    }
}

/// Low-frequency map of a patch plus the solver's edge field.
#[derive(Debug, Clone, PartialEq)]
pub struct LfMap<T> {
    pub side: usize,
    pub data: Vec<T>,
    /// Edge indicator in `[0, 1]`, close to 1 on preserved discontinuities.
    pub edge_field: Vec<T>,
}

/// Low-frequency map of a patch.
pub fn lfm<T: Real>(patch: &Patch<T>, cfg: &LfmConfig) -> Result<LfMap<T>> {
    lfm_with_trace(patch, cfg).map(|(m, _)| m)
}

/// Like [`lfm`], also returning the objective after every sweep
/// (element 0 is the starting point `L = I`, `v = 0`).
pub fn lfm_with_trace<T: Real>(patch: &Patch<T>, cfg: &LfmConfig) -> Result<(LfMap<T>, Vec<T>)> {
    let side = patch.side();
    let (data, edge_field, trace) = solve(patch.data(), side, side, cfg, true)?;
    Ok((
        LfMap {
            side,
            data,
            edge_field,
        },
        trace,
    ))
}

/// Runs the solver on an arbitrary `width`×`height` plane. Returns `(L, v)`.
pub fn lfm_plane<T: Real>(
    data: &[T],
    width: usize,
    height: usize,
    cfg: &LfmConfig,
) -> Result<(Vec<T>, Vec<T>)> {
    let (l, v, _) = solve(data, width, height, cfg, false)?;
    Ok((l, v))
}

/// Discrete objective for a patch and a candidate map.
pub fn lfm_energy<T: Real>(patch: &Patch<T>, map: &LfMap<T>, cfg: &LfmConfig) -> Result<T> {
    let n = patch.side();
    if map.side != n || map.data.len() != n * n || map.edge_field.len() != n * n {
        return Err(Error::shape(
            format!("{n}x{n} map"),
            format!("side {} with {} values", map.side, map.data.len()),
        ));
    }
    Ok(plane_energy(patch.data(), &map.data, &map.edge_field, n, n, cfg))
}

/// Objective on a plane; inputs must have matching `width * height` lengths.
pub fn plane_energy<T: Real>(
    image: &[T],
    l: &[T],
    v: &[T],
    width: usize,
    height: usize,
    cfg: &LfmConfig,
) -> T {
    let alpha = T::lit(cfg.alpha);
    let beta = T::lit(cfg.beta);
    let eps = T::lit(cfg.edge_width);
    let quarter_eps = T::lit(0.25 / cfg.edge_width);
    let half = T::lit(0.5);
    let mut data_term = T::zero();
    let mut smooth_term = T::zero();
    let mut edge_term = T::zero();
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let d = image[i] - l[i];
            data_term += half * d * d;
            let gate = (T::one() - v[i]) * (T::one() - v[i]);
            smooth_term += gate * forward_sq(l, i, r, c, width, height);
            edge_term += eps * forward_sq(v, i, r, c, width, height) + quarter_eps * v[i] * v[i];
        }
    }
    data_term + alpha * smooth_term + beta * edge_term
}

/// Anisotropic total variation: sum of absolute forward differences.
pub fn total_variation<T: Real>(data: &[T], width: usize, height: usize) -> T {
    let mut tv = T::zero();
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if c + 1 < width {
                tv += (data[i + 1] - data[i]).abs();
            }
            if r + 1 < height {
                tv += (data[i + width] - data[i]).abs();
            }
        }
    }
    tv
}

#[inline]
fn forward_sq<T: Real>(x: &[T], i: usize, r: usize, c: usize, width: usize, height: usize) -> T {
    let mut s = T::zero();
    if c + 1 < width {
        let d = x[i + 1] - x[i];
        s += d * d;
    }
    if r + 1 < height {
        let d = x[i + width] - x[i];
        s += d * d;
    }
    s
}

type Solution<T> = (Vec<T>, Vec<T>, Vec<T>);

fn solve<T: Real>(
    image: &[T],
    width: usize,
    height: usize,
    cfg: &LfmConfig,
    trace: bool,
) -> Result<Solution<T>> {
    cfg.validate()?;
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let alpha = T::lit(cfg.alpha);
    let two_alpha = T::lit(2.0 * cfg.alpha);
    let beta_eps = T::lit(cfg.beta * cfg.edge_width);
    let beta_quarter = T::lit(cfg.beta * 0.25 / cfg.edge_width);
    let tol = T::lit(cfg.tol);

    let mut l = image.to_vec();
    let mut v = vec![T::zero(); image.len()];
    let mut energies = Vec::new();
    if trace {
        energies.push(plane_energy(image, &l, &v, width, height, cfg));
    }

    for _ in 0..cfg.iterations {
        let mut moved = T::zero();

        // Edge field: v_i = (alpha g_i + beta eps sum v_j) / (alpha g_i + beta eps deg + beta / (4 eps))
        for r in 0..height {
            for c in 0..width {
                let i = r * width + c;
                let g = forward_sq(&l, i, r, c, width, height);
                let mut nb_sum = T::zero();
                let mut deg = T::zero();
                for j in neighbours(i, r, c, width, height).into_iter().flatten() {
                    nb_sum += v[j];
                    deg += T::one();
                }
                let num = alpha * g + beta_eps * nb_sum;
                let den = alpha * g + beta_eps * deg + beta_quarter;
                let next = (num / den).min(T::one()).max(T::zero());
                moved = moved.max((next - v[i]).abs());
                v[i] = next;
            }
        }

        // Smooth map: exact minimizer over L_i with v fixed, written as an
        // increment so a flat neighbourhood leaves L_i untouched bit-for-bit.
        for r in 0..height {
            for c in 0..width {
                let i = r * width + c;
                let own_gate = (T::one() - v[i]) * (T::one() - v[i]);
                let mut weight = T::zero();
                let mut pull = T::zero();
                let [left, right, up, down] = neighbours(i, r, c, width, height);
                for j in [right, down].into_iter().flatten() {
                    weight += own_gate;
                    pull += own_gate * (l[j] - l[i]);
                }
                for j in [left, up].into_iter().flatten() {
                    let gate = (T::one() - v[j]) * (T::one() - v[j]);
                    weight += gate;
                    pull += gate * (l[j] - l[i]);
                }
                let step = (image[i] - l[i] + two_alpha * pull) / (T::one() + two_alpha * weight);
                moved = moved.max(step.abs());
                l[i] += step;
            }
        }

        if trace {
            energies.push(plane_energy(image, &l, &v, width, height, cfg));
        }
        if moved < tol {
            break;
        }
    }
    Ok((l, v, energies))
}

/// `[left, right, up, down]` neighbour indices inside the plane.
#[inline]
fn neighbours(i: usize, r: usize, c: usize, width: usize, height: usize) -> [Option<usize>; 4] {
    [
        (c > 0).then(|| i - 1),
        (c + 1 < width).then(|| i + 1),
        (r > 0).then(|| i - width),
        (r + 1 < height).then(|| i + width),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
    }

    fn noise_patch(side: usize, amp: f64, seed: u64) -> Patch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..side * side)
            .map(|_| 0.5 + amp * (rng.random::<f64>() - 0.5))
            .collect();
        Patch::new(side, (0, 0), data).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(LfmConfig::default().validate().is_ok());
        for bad in [
            LfmConfig { alpha: 0.0, ..Default::default() },
            LfmConfig { beta: -1.0, ..Default::default() },
            LfmConfig { iterations: 0, ..Default::default() },
            LfmConfig { tol: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn constant_patch_is_a_fixed_point() {
        let p = Patch::new(16, (0, 0), vec![0.37f64; 256]).unwrap();
        let m = lfm(&p, &LfmConfig::default()).unwrap();
        assert_eq!(m.data, p.data());
        assert!(m.edge_field.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn uniform_noise_loses_variance() {
        let p = noise_patch(32, 1.0, 3);
        let m = lfm(&p, &LfmConfig::default()).unwrap();
        assert!(variance(&m.data) < variance(p.data()));
    }

    #[test]
    fn low_amplitude_noise_is_smoothed_out() {
        let p = noise_patch(32, 0.02, 4);
        let m = lfm(&p, &LfmConfig::default()).unwrap();
        assert!(variance(&m.data) < 0.2 * variance(p.data()));
    }

    #[test]
    fn step_edge_is_kept() {
        let side = 16;
        let data: Vec<f64> = (0..side * side)
            .map(|i| if i % side >= 8 { 0.8 } else { 0.2 })
            .collect();
        let p = Patch::new(side, (0, 0), data).unwrap();
        let m = lfm(&p, &LfmConfig::default()).unwrap();
        for r in 0..side {
            let row = &m.edge_field[r * side..(r + 1) * side];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            // forward difference from column 7 straddles the step
            assert_eq!(argmax, 7);
            assert!(row[7] > 0.9);
            assert!(m.data[r * side + 2] < 0.25 && m.data[r * side + 13] > 0.75);
        }
    }

    #[test]
    fn energy_of_identity_map() {
        let cfg = LfmConfig::default();
        let flat = Patch::new(8, (0, 0), vec![0.5f64; 64]).unwrap();
        let as_map = |p: &Patch<f64>| LfMap {
            side: p.side(),
            data: p.data().to_vec(),
            edge_field: vec![0.0; p.data().len()],
        };
        assert_eq!(lfm_energy(&flat, &as_map(&flat), &cfg).unwrap(), 0.0);

        let noisy = noise_patch(8, 1.0, 9);
        let grad_sq: f64 = (0..64)
            .map(|i| forward_sq(noisy.data(), i, i / 8, i % 8, 8, 8))
            .sum();
        let e = lfm_energy(&noisy, &as_map(&noisy), &cfg).unwrap();
        assert!((e - cfg.alpha * grad_sq).abs() < 1e-12);
    }

    #[test]
    fn energy_shape_mismatch() {
        let p = noise_patch(8, 1.0, 1);
        let m = LfMap {
            side: 9,
            data: vec![0.0; 81],
            edge_field: vec![0.0; 81],
        };
        assert!(matches!(
            lfm_energy(&p, &m, &LfmConfig::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut d = vec![0.5f64; 64];
        d[10] = f64::NAN;
        let p = Patch::from_raw(8, d);
        assert!(matches!(
            lfm(&p, &LfmConfig::default()),
            Err(Error::NonFiniteInput)
        ));
    }

    #[test]
    fn energy_trace_descends_and_range_is_kept() {
        let cfg = LfmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..10 {
            let amp = rng.random_range(0.01..1.0);
            let p = noise_patch(16, amp, seed);
            let (m, trace) = lfm_with_trace(&p, &cfg).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
            }
            let lo = p.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = p.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(m.data.iter().all(|&x| x >= lo - 1e-6 && x <= hi + 1e-6));
            assert!(m.edge_field.iter().all(|&x| (0.0..=1.0).contains(&x)));
            assert!(total_variation(&m.data, 16, 16) <= total_variation(p.data(), 16, 16));
            let start = plane_energy(p.data(), p.data(), &vec![0.0; 256], 16, 16, &cfg);
            assert!(lfm_energy(&p, &m, &cfg).unwrap() <= start + 1e-9);
        }
    }
}
