//! Pixel-wise banding map, worst-percentile pooling and the end-to-end
//! detection entry point.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqmaps::{self, HfMap, LfMap, LfmConfig, MapScope};
use crate::imgcore::{self, GridGeometry, Image, PadPolicy, PatchGrid};
use crate::masking::{self, MaskingParams, SpatialFreqStats};
use crate::net::{InputKind, Model};
use crate::scalar::Real;

/// How the pooled sum is normalized by the number of selected pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolNormalization {
    /// Average each patch's selected values, then average over patches.
    #[default]
    PerPatch,
    /// Divide the total selected sum by the total selected count and M.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchProvenance<T> {
    pub k: usize,
    pub label: u8,
    pub weight: T,
}

/// Image-sized map of visibility-weighted banding evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct BandingMap<T> {
    geometry: GridGeometry,
    data: Vec<T>,
    patches: Vec<PatchProvenance<T>>,
}

impl<T: Real> BandingMap<T> {
    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    /// Row-major values, one per image pixel.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn patches(&self) -> &[PatchProvenance<T>] {
        &self.patches
    }

    /// Values of patch `k`'s in-image region, row-major.
    pub fn patch_values(&self, k: usize) -> Vec<T> {
        let (r0, c0, h, w) = self.geometry.interior(k);
        let mut out = Vec::with_capacity(h * w);
        for r in r0..r0 + h {
            out.extend_from_slice(&self.data[r * self.geometry.width + c0..][..w]);
        }
        out
    }

    /// Multiplies every value by `c`, keeping provenance. `c` must be >= 0.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            geometry: self.geometry,
            data: self.data.iter().map(|v| *v * c).collect(),
            patches: self.patches.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityResult<T> {
    /// Image-level banding score; 0 means no visible banding.
    pub q: T,
    /// Sum of the selected values in each patch.
    pub patch_sums: Vec<T>,
    /// Number of selected values in each patch.
    pub selected: Vec<usize>,
    /// Percentage of non-zero values pooled per patch.
    pub pool_fraction: f64,
    pub normalization: PoolNormalization,
}

/// Builds `BM_k(i, j) = w_k * label_k * |HFM_k(i, j)|` and stitches it into
/// image coordinates, dropping padding.
pub fn banding_map<T: Real>(
    grid: &PatchGrid<T>,
    labels: &[u8],
    hfms: &[HfMap<T>],
    weights: &[T],
) -> Result<BandingMap<T>> {
    banding_map_on(grid.geometry(), labels, hfms, weights)
}

pub(crate) fn banding_map_on<T: Real>(
    geometry: GridGeometry,
    labels: &[u8],
    hfms: &[HfMap<T>],
    weights: &[T],
) -> Result<BandingMap<T>> {
    let m = geometry.len();
    for len in [labels.len(), hfms.len(), weights.len()] {
        if len != m {
            return Err(Error::LengthMismatch {
                expected: m,
                actual: len,
            });
        }
    }
    let side = geometry.side;
    if let Some(bad) = hfms.iter().find(|h| h.side != side || h.data.len() != side * side) {
        return Err(Error::shape(format!("{side}x{side} HFM"), bad.data.len()));
    }
    let tiles: Vec<Vec<T>> = hfms
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((h, &label), &w)| {
            let gain = w * T::lit(label.min(1) as f64);
            h.data.iter().map(|v| gain * v.abs()).collect()
        })
        .collect();
    let refs: Vec<&[T]> = tiles.iter().map(|t| &t[..]).collect();
    let data = geometry.stitch(&refs);
    let patches = labels
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(k, (&label, &weight))| PatchProvenance { k, label, weight })
        .collect();
    Ok(BandingMap {
        geometry,
        data,
        patches,
    })
}

/// Image score from the top `pool_fraction` percent of each patch's non-zero
/// banding values, with per-patch normalization.
pub fn quality_score<T: Real>(bm: &BandingMap<T>, pool_fraction: f64) -> Result<QualityResult<T>> {
    quality_score_with(bm, pool_fraction, PoolNormalization::PerPatch)
}

pub fn quality_score_with<T: Real>(
    bm: &BandingMap<T>,
    pool_fraction: f64,
    normalization: PoolNormalization,
) -> Result<QualityResult<T>> {
    if !(pool_fraction > 0.0 && pool_fraction <= 100.0) {
        return Err(Error::InvalidConfig(format!(
            "pool fraction {pool_fraction} outside (0, 100]"
        )));
    }
    let m = bm.geometry.len();
    if m == 0 || bm.data.is_empty() {
        return Err(Error::EmptyMap);
    }
    let mut patch_sums = Vec::with_capacity(m);
    let mut selected = Vec::with_capacity(m);
    for k in 0..m {
        let mut vals: Vec<T> = bm.patch_values(k).into_iter().filter(|v| *v > T::zero()).collect();
        // stable sort keeps pixel order among equal values
        vals.sort_by(|a, b| b.partial_cmp(a).expect("finite banding values"));
        let count = if vals.is_empty() {
            0
        } else {
            ((pool_fraction / 100.0 * vals.len() as f64).ceil() as usize).clamp(1, vals.len())
        };
        patch_sums.push(vals[..count].iter().fold(T::zero(), |a, &b| a + b));
        selected.push(count);
    }
    let m_t = T::lit(m as f64);
    let q = match normalization {
        PoolNormalization::PerPatch => {
            patch_sums
                .iter()
                .zip(&selected)
                .filter(|(_, &n)| n > 0)
                .map(|(&s, &n)| s / T::lit(n as f64))
                .fold(T::zero(), |a, b| a + b)
                / m_t
        }
        PoolNormalization::Global => {
            let total: usize = selected.iter().sum();
            if total == 0 {
                T::zero()
            } else {
                patch_sums.iter().fold(T::zero(), |a, &b| a + b) / (m_t * T::lit(total as f64))
            }
        }
    };
    Ok(QualityResult {
        q,
        patch_sums,
        selected,
        pool_fraction,
        normalization,
    })
}

/// Settings for [`detect`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub patch_side: usize,
    pub pad_policy: PadPolicy,
    pub lfm: LfmConfig,
    pub gamma: f64,
    /// Percentage of non-zero banding values pooled per patch.
    pub pool_fraction: f64,
    pub normalization: PoolNormalization,
    /// A patch is labeled banded when its probability is at least this.
    pub threshold: f64,
    pub map_scope: MapScope,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            patch_side: imgcore::DEFAULT_PATCH_SIDE,
            pad_policy: PadPolicy::Reflect,
            lfm: LfmConfig::default(),
            gamma: 1.5,
            pool_fraction: 80.0,
            normalization: PoolNormalization::PerPatch,
            threshold: 0.5,
            map_scope: MapScope::Patch,
        }
    }
}

impl DetectConfig {
    pub fn masking(&self) -> MaskingParams {
        MaskingParams {
            gamma: self.gamma,
            side: self.patch_side,
        }
    }
}

/// Everything [`detect`] computes for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub map: BandingMap<T>,
    pub quality: QualityResult<T>,
    pub probabilities: Vec<T>,
    pub labels: Vec<u8>,
    pub stats: Vec<SpatialFreqStats<T>>,
    pub eps: T,
    pub weights: Vec<T>,
}

/// Frequency maps for every patch of a grid, in patch order.
pub fn grid_maps<T: Real>(
    img: &Image<T>,
    grid: &PatchGrid<T>,
    lfm_cfg: &LfmConfig,
    scope: MapScope,
) -> Result<Vec<(HfMap<T>, LfMap<T>)>> {
    let side = grid.side();
    match scope {
        MapScope::Patch => grid
            .patches()
            .par_iter()
            .map(|p| Ok((freqmaps::hfm(p), freqmaps::lfm(p, lfm_cfg)?)))
            .collect(),
        MapScope::Image => {
            let (w, h) = (img.width(), img.height());
            let hf = freqmaps::sobel_magnitude(img.data(), w, h);
            let (lf, edges) = freqmaps::lfm_plane(img.data(), w, h, lfm_cfg)?;
            let geom = grid.geometry();
            let policy = grid.pad_policy();
            let hfs = geom.cut(&hf, policy);
            let lfs = geom.cut(&lf, policy);
            let es = geom.cut(&edges, policy);
            Ok(hfs
                .into_iter()
                .zip(lfs)
                .zip(es)
                .map(|((hf, lf), e)| {
                    (
                        HfMap { side, data: hf },
                        LfMap {
                            side,
                            data: lf,
                            edge_field: e,
                        },
                    )
                })
                .collect())
        }
    }
}

/// Runs the full pipeline: tiling, frequency maps, classification, masking,
/// banding map and pooling.
pub fn detect<T: Real>(img: &Image<T>, model: &Model<T>, cfg: &DetectConfig) -> Result<Detection<T>> {
    let side = cfg.patch_side;
    if model.config().input_side != side {
        return Err(Error::shape(
            format!("model input side {}", model.config().input_side),
            format!("patch side {side}"),
        ));
    }
    let masking_params = cfg.masking();
    masking_params.validate()?;
    let grid = imgcore::tile_patches(img, side, cfg.pad_policy)?;
    let maps = grid_maps(img, &grid, &cfg.lfm, cfg.map_scope)?;

    let kinds = model.config().variant.inputs();
    let inputs: Vec<Vec<&[T]>> = maps
        .iter()
        .zip(grid.patches())
        .map(|((hf, lf), patch)| {
            kinds
                .iter()
                .map(|k| match k {
                    InputKind::Hf => &hf.data[..],
                    InputKind::Lf => &lf.data[..],
                    InputKind::Raw => patch.data(),
                })
                .collect()
        })
        .collect();
    let mut probabilities = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(64) {
        probabilities.extend(model.predict_batch(chunk)?);
    }
    let threshold = T::lit(cfg.threshold);
    let labels: Vec<u8> = probabilities.iter().map(|&p| u8::from(p >= threshold)).collect();

    let (stats, eps, weights) = masking::mask_weights(grid.patches(), &masking_params)?;
    let hfms: Vec<HfMap<T>> = maps.into_iter().map(|(h, _)| h).collect();
    let map = banding_map(&grid, &labels, &hfms, &weights)?;
    let quality = quality_score_with(&map, cfg.pool_fraction, cfg.normalization)?;
    Ok(Detection {
        map,
        quality,
        probabilities,
        labels,
        stats,
        eps,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub k: usize,
    pub label: u8,
    pub w: f64,
    pub sf: f64,
}

/// JSON summary of a detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub q: f64,
    pub m_patches: usize,
    pub p: f64,
    pub per_patch: Vec<PatchRecord>,
}

impl<T: Real> Detection<T> {
    pub fn report(&self) -> DetectionReport {
        DetectionReport {
            q: self.quality.q.as_f64(),
            m_patches: self.labels.len(),
            p: self.quality.pool_fraction,
            per_patch: self
                .labels
                .iter()
                .zip(&self.weights)
                .zip(&self.stats)
                .enumerate()
                .map(|(k, ((&label, w), s))| PatchRecord {
                    k,
                    label,
                    w: w.as_f64(),
                    sf: s.sf.as_f64(),
                })
                .collect(),
        }
    }

    /// Writes the min-max normalized banding map as an 8-bit grayscale PNG.
    pub fn save_heatmap(&self, path: impl AsRef<Path>) -> Result<()> {
        let (codes, _, _) = imgcore::normalize_to_u8(self.map.data());
        imgcore::save_gray8(path, self.map.width(), self.map.height(), &codes)
    }
}
