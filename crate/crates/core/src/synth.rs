//! Synthetic banding corpus: smooth backgrounds, bit-depth reduction for
//! banded positives, dithered 8-bit renditions and textures for negatives.
//!
//! Every patch is a pure function of its manifest record, so a corpus can
//! be regenerated bit-exactly from the manifest alone.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{self, Image, Patch};
use crate::scalar::Real;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundKind {
    LinearGradient,
    RadialGradient,
    LowFreqNoise,
    Texture,
}

impl BackgroundKind {
    pub const ALL: [BackgroundKind; 4] = [
        BackgroundKind::LinearGradient,
        BackgroundKind::RadialGradient,
        BackgroundKind::LowFreqNoise,
        BackgroundKind::Texture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BackgroundKind::LinearGradient => "linear-gradient",
            BackgroundKind::RadialGradient => "radial-gradient",
            BackgroundKind::LowFreqNoise => "low-freq-noise",
            BackgroundKind::Texture => "texture",
        }
    }

    /// Smooth kinds can carry banding; textures are negatives only.
    pub fn is_smooth(self) -> bool {
        self != BackgroundKind::Texture
    }
}

impl FromStr for BackgroundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BackgroundKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count_per_class: usize,
    pub side: usize,
    pub kinds: Vec<BackgroundKind>,
    pub bit_depths: Vec<u8>,
    /// Dither the smooth negatives before 8-bit rounding.
    pub dither: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count_per_class: 1250,
            side: imgcore::DEFAULT_PATCH_SIDE,
            kinds: BackgroundKind::ALL.to_vec(),
            bit_depths: vec![3, 4, 5],
            dither: true,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.count_per_class == 0 {
            return err("count_per_class must be at least 1");
        }
        if self.side < imgcore::MIN_PATCH_SIDE {
            return Err(Error::PatchTooSmall(self.side));
        }
        if !self.kinds.iter().any(|k| k.is_smooth()) {
            return err("at least one smooth background kind is required");
        }
        if self.bit_depths.is_empty() || self.bit_depths.iter().any(|b| !(2..=7).contains(b)) {
            return err("bit depths must be non-empty and within [2, 7]");
        }
        Ok(())
    }
}

/// One corpus entry. `path` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub label: u8,
    pub kind: String,
    pub bits: Option<u8>,
    pub seed: u64,
    pub path: String,
    /// Whether a smooth negative was dithered; absent in external manifests.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dither: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    /// Directory the record paths are relative to.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    /// Reads a JSON Lines manifest; blank lines are skipped.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| Error::BadManifest {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if rec.label > 1 {
                return Err(Error::BadManifest {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("label {} is not 0 or 1", rec.label),
                });
            }
            records.push(rec);
        }
        Ok(Self {
            records,
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn record_path(&self, rec: &ManifestRecord) -> PathBuf {
        self.root.join(&rec.path)
    }

    /// Loads every record's patch from disk.
    pub fn load_patches<T: Real>(&self) -> Result<Vec<Patch<T>>> {
        self.records
            .iter()
            .map(|r| {
                let img: Image<T> = imgcore::load_image(self.record_path(r))?;
                if img.width() != img.height() {
                    return Err(Error::shape(
                        "square patch",
                        format!("{}x{} in {}", img.width(), img.height(), r.path),
                    ));
                }
                Patch::new(img.width(), (0, 0), img.into_data())
            })
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-record seed derived from the corpus seed.
pub fn record_seed(corpus_seed: u64, label: u8, index: usize) -> u64 {
    splitmix64(splitmix64(corpus_seed) ^ ((index as u64) << 1 | label as u64))
}

/// Smooth or textured background in `[0, 1]` with a random intensity range.
pub fn gen_background<T: Real>(kind: BackgroundKind, side: usize, seed: u64) -> Result<Patch<T>> {
    gen_background_with(kind, side, seed, None)
}

/// Like [`gen_background`] but with an explicit intensity range (slope).
/// A range of 0 yields a constant patch.
pub fn gen_background_with<T: Real>(
    kind: BackgroundKind,
    side: usize,
    seed: u64,
    range: Option<f64>,
) -> Result<Patch<T>> {
    let data = render_plane(kind, side, side, seed, range);
    Patch::new(side, (0, 0), data.into_iter().map(T::lit).collect())
}

fn render_plane(kind: BackgroundKind, width: usize, height: usize, seed: u64, range: Option<f64>) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span: f64 = rng.random_range(0.25..0.9);
    let span = range.unwrap_or(span).clamp(0.0, 1.0);
    let offset = rng.random_range(0.0..=1.0 - span);
    let descending = rng.random_bool(0.5);
    let (w, h) = (width as f64, height as f64);
    let t: Vec<f64> = match kind {
        BackgroundKind::LinearGradient => {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = (theta.cos(), theta.sin());
            let proj: Vec<f64> = (0..width * height)
                .map(|i| (i % width) as f64 * dx + (i / width) as f64 * dy)
                .collect();
            normalize(proj)
        }
        BackgroundKind::RadialGradient => {
            let cx = rng.random_range(-0.25 * w..1.25 * w);
            let cy = rng.random_range(-0.25 * h..1.25 * h);
            let dist: Vec<f64> = (0..width * height)
                .map(|i| ((i % width) as f64 - cx).hypot((i / width) as f64 - cy))
                .collect();
            normalize(dist)
        }
        BackgroundKind::LowFreqNoise => {
            // cosine-interpolated 4x4 lattice of random values
            let grid = 4usize;
            let lattice: Vec<f64> = (0..grid * grid).map(|_| rng.random::<f64>()).collect();
            let at = |gx: usize, gy: usize| lattice[gy.min(grid - 1) * grid + gx.min(grid - 1)];
            let smooth = |t: f64| (1.0 - (t * std::f64::consts::PI).cos()) * 0.5;
            let field: Vec<f64> = (0..width * height)
                .map(|i| {
                    let fx = (i % width) as f64 / (w - 1.0).max(1.0) * (grid - 1) as f64;
                    let fy = (i / width) as f64 / (h - 1.0).max(1.0) * (grid - 1) as f64;
                    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
                    let (tx, ty) = (smooth(fx - x0 as f64), smooth(fy - y0 as f64));
                    let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
                    let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
                    top * (1.0 - ty) + bottom * ty
                })
                .collect();
            normalize(field)
        }
        BackgroundKind::Texture => {
            // fine oriented grating plus white noise
            let freq = rng.random_range(0.15..0.45);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let mix = rng.random_range(0.0..1.0);
            let field: Vec<f64> = (0..width * height)
                .map(|i| {
                    let (x, y) = ((i % width) as f64, (i / width) as f64);
                    let grating = 0.5 + 0.5 * (std::f64::consts::TAU * freq * (x * theta.cos() + y * theta.sin())).sin();
                    mix * grating + (1.0 - mix) * rng.random::<f64>()
                })
                .collect();
            normalize(field)
        }
    };
    t.into_iter()
        .map(|t| {
            let t = if descending { 1.0 - t } else { t };
            (offset + span * t).clamp(0.0, 1.0)
        })
        .collect()
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.into_iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Uniform quantizer to `2^bits` levels over `[0, 1]`.
#[inline]
pub fn quantize<T: Real>(v: T, bits: u8) -> T {
    let levels = T::lit(((1u32 << bits) - 1) as f64);
    (v * levels).round() / levels
}

/// Bit-depth reduction of a patch; `bits` must lie in `[2, 7]`.
pub fn apply_banding<T: Real>(patch: &Patch<T>, bits: u8) -> Patch<T> {
    assert!((2..=7).contains(&bits), "bits {bits} outside [2, 7]");
    let data = patch.data().iter().map(|&v| quantize(v, bits)).collect();
    Patch::new(patch.side(), patch.origin(), data).expect("quantizer preserves range")
}

fn round8(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Triangular noise spanning one 8-bit step each way, then 8-bit rounding.
fn dither8(v: f64, rng: &mut ChaCha8Rng) -> f64 {
    let tpdf = rng.random::<f64>() - rng.random::<f64>();
    round8(v + tpdf / 255.0)
}

/// Renders a plane the way the corpus does for a record of this shape.
fn render_variant(
    plane: Vec<f64>,
    label: u8,
    kind: BackgroundKind,
    bits: Option<u8>,
    dither: bool,
    seed: u64,
) -> Vec<f64> {
    match (label, bits) {
        (1, Some(b)) => plane.into_iter().map(|v| round8(quantize(v, b))).collect(),
        _ if dither && kind.is_smooth() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            plane.into_iter().map(|v| dither8(v, &mut rng)).collect()
        }
        _ => plane.into_iter().map(round8).collect(),
    }
}

/// Regenerates a record's patch from its metadata alone.
pub fn render_record<T: Real>(rec: &ManifestRecord, side: usize) -> Result<Patch<T>> {
    let kind: BackgroundKind = rec.kind.parse()?;
    if rec.label == 1 && rec.bits.is_none() {
        return Err(Error::InvalidConfig(format!("banded record {} has no bit depth", rec.id)));
    }
    let plane = render_plane(kind, side, side, rec.seed, None);
    let data = render_variant(plane, rec.label, kind, rec.bits, rec.dither, rec.seed);
    Patch::new(side, (0, 0), data.into_iter().map(T::lit).collect())
}

/// Record metadata of the whole corpus, positives first.
pub fn plan_records(cfg: &SynthConfig) -> Result<Vec<ManifestRecord>> {
    cfg.validate()?;
    let smooth: Vec<BackgroundKind> = cfg.kinds.iter().copied().filter(|k| k.is_smooth()).collect();
    let has_texture = cfg.kinds.contains(&BackgroundKind::Texture);
    let mut records = Vec::with_capacity(2 * cfg.count_per_class);
    for i in 0..cfg.count_per_class {
        let kind = smooth[i % smooth.len()];
        let bits = cfg.bit_depths[(i / smooth.len()) % cfg.bit_depths.len()];
        let id = format!("pos_{i:05}");
        records.push(ManifestRecord {
            path: format!("patches/{id}.pgm"),
            id,
            label: 1,
            kind: kind.name().into(),
            bits: Some(bits),
            seed: record_seed(cfg.seed, 1, i),
            dither: false,
        });
    }
    for i in 0..cfg.count_per_class {
        let kind = if has_texture && i % 4 == 3 {
            BackgroundKind::Texture
        } else {
            smooth[(i - i / 4 * usize::from(has_texture)) % smooth.len()]
        };
        let id = format!("neg_{i:05}");
        records.push(ManifestRecord {
            path: format!("patches/{id}.pgm"),
            id,
            label: 0,
            kind: kind.name().into(),
            bits: None,
            seed: record_seed(cfg.seed, 0, i),
            dither: cfg.dither && kind.is_smooth(),
        });
    }
    Ok(records)
}

/// Generates the corpus in memory as `(record, patch)` pairs.
pub fn gen_patches<T: Real>(cfg: &SynthConfig) -> Result<Vec<(ManifestRecord, Patch<T>)>> {
    use rayon::prelude::*;
    plan_records(cfg)?
        .into_par_iter()
        .map(|r| {
            let p = render_record(&r, cfg.side)?;
            Ok((r, p))
        })
        .collect()
}

/// Writes the corpus under `out_dir` as PGM patches plus `manifest.jsonl`.
pub fn gen_dataset(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let patch_dir = out_dir.join("patches");
    fs::create_dir_all(&patch_dir).map_err(|e| Error::io(&patch_dir, e))?;
    let pairs = gen_patches::<f64>(cfg)?;
    let mut records = Vec::with_capacity(pairs.len());
    for (rec, patch) in pairs {
        let codes = imgcore::to_u8(patch.data());
        imgcore::save_gray8(out_dir.join(&rec.path), cfg.side, cfg.side, &codes)?;
        records.push(rec);
    }
    let manifest = DatasetManifest {
        records,
        root: out_dir.to_path_buf(),
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Smooth full-size gradient (linear or radial) spanning a wide range.
pub fn gen_gradient_image<T: Real>(width: usize, height: usize, seed: u64) -> Result<Image<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = if rng.random_bool(0.5) {
        BackgroundKind::LinearGradient
    } else {
        BackgroundKind::RadialGradient
    };
    let span = rng.random_range(0.5..0.95);
    let plane = render_plane(kind, width, height, splitmix64(seed), Some(span));
    Image::new(width, height, plane.into_iter().map(T::lit).collect())
}

/// Banded rendition of an image: bit-depth reduction then 8-bit storage.
pub fn band_image<T: Real>(img: &Image<T>, bits: u8) -> Image<T> {
    assert!((2..=7).contains(&bits), "bits {bits} outside [2, 7]");
    let data = img
        .data()
        .iter()
        .map(|&v| T::lit(round8(quantize(v, bits).as_f64())))
        .collect();
    Image::new(img.width(), img.height(), data).expect("range preserved")
}

/// Dithered 8-bit rendition of an image.
pub fn dither_image<T: Real>(img: &Image<T>, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| T::lit(dither8(v.as_f64(), &mut rng)))
        .collect();
    Image::new(img.width(), img.height(), data).expect("range preserved")
}
