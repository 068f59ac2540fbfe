//! Luma images, fixed-size patches and the tiling that connects them.

use std::path::Path;

use image::{DynamicImage, ImageError};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest patch side accepted by [`tile_patches`].
pub const MIN_PATCH_SIDE: usize = 8;

/// Default patch side used throughout the pipeline.
pub const DEFAULT_PATCH_SIDE: usize = 64;

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Single-channel image with values in `[0, 1]`, row-major, top-left origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    /// Builds an image, checking dimensions and the `[0, 1]` value range.
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::shape(width * height, data.len()));
        }
        if let Some(bad) = data
            .iter()
            .find(|v| !v.is_finite() || **v < T::zero() || **v > T::one())
        {
            return Err(Error::InvalidImage(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from a closure evaluated at every `(row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Converts the pixel type, e.g. `f64` corpus images into `f32` for inference.
    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Square tile cut from an image; `side` is the patch size N.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<T> {
    side: usize,
    origin: (usize, usize),
    data: Vec<T>,
}

impl<T: Real> Patch<T> {
    pub fn new(side: usize, origin: (usize, usize), data: Vec<T>) -> Result<Self> {
        if side < MIN_PATCH_SIDE {
            return Err(Error::PatchTooSmall(side));
        }
        if data.len() != side * side {
            return Err(Error::shape(side * side, data.len()));
        }
        if data
            .iter()
            .any(|v| !v.is_finite() || *v < T::zero() || *v > T::one())
        {
            return Err(Error::InvalidImage("patch value outside [0, 1]".into()));
        }
        Ok(Self { side, origin, data })
    }

    /// Builds a patch without range validation. Used by numerical tests that
    /// need out-of-range or non-finite content.
    pub fn from_raw(side: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), side * side, "patch data must be side*side");
        Self {
            side,
            origin: (0, 0),
            data,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// `(row, col)` of the top-left pixel in the source image.
    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.side + col]
    }

    pub fn transpose(&self) -> Self {
        let n = self.side;
        let mut data = vec![T::zero(); n * n];
        for r in 0..n {
            for c in 0..n {
                data[c * n + r] = self.data[r * n + c];
            }
        }
        Self {
            side: n,
            origin: (self.origin.1, self.origin.0),
            data,
        }
    }
}

/// How boundary patches are filled past the image edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadPolicy {
    /// Mirror about the border, repeating the edge sample (`d c b a | a b c d`).
    #[default]
    Reflect,
    /// Repeat the edge sample.
    Clamp,
}

impl PadPolicy {
    /// Maps a possibly out-of-range coordinate onto `0..len`.
    #[inline]
    pub fn index(self, i: isize, len: usize) -> usize {
        match self {
            PadPolicy::Reflect => reflect_index(i, len),
            PadPolicy::Clamp => i.clamp(0, len as isize - 1) as usize,
        }
    }
}

/// Symmetric reflection, periodic with period `2 * len` so arbitrarily wide
/// padding stays in range.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let p = i.rem_euclid(2 * n);
    if p < n {
        p as usize
    } else {
        (2 * n - 1 - p) as usize
    }
}

/// Non-overlapping tiling of an image into equal square patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid<T> {
    patches: Vec<Patch<T>>,
    rows: usize,
    cols: usize,
    side: usize,
    width: usize,
    height: usize,
    pad_policy: PadPolicy,
}

impl<T: Real> PatchGrid<T> {
    /// Patches in row-major order.
    pub fn patches(&self) -> &[Patch<T>] {
        &self.patches
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of patches M.
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pad_policy(&self) -> PadPolicy {
        self.pad_policy
    }

    /// Width and height of the source image.
    pub fn image_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            rows: self.rows,
            cols: self.cols,
            side: self.side,
            width: self.width,
            height: self.height,
        }
    }

    /// Reassembles the source image from patch interiors, dropping padding.
    pub fn stitch(&self) -> Image<T> {
        let tiles: Vec<&[T]> = self.patches.iter().map(|p| p.data()).collect();
        let data = self.geometry().stitch(&tiles);
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Placement of a tiling in image coordinates, independent of pixel content.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub side: usize,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, side: usize) -> Self {
        Self {
            rows: height.div_ceil(side),
            cols: width.div_ceil(side),
            side,
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Image-space rectangle `(row0, col0, rows, cols)` covered by patch `k`,
    /// clipped to the image.
    pub fn interior(&self, k: usize) -> (usize, usize, usize, usize) {
        let r0 = (k / self.cols) * self.side;
        let c0 = (k % self.cols) * self.side;
        let h = self.side.min(self.height - r0);
        let w = self.side.min(self.width - c0);
        (r0, c0, h, w)
    }

    /// Copies the in-image part of each `side*side` tile into a full image buffer.
    pub fn stitch<T: Copy + Default>(&self, tiles: &[&[T]]) -> Vec<T> {
        assert_eq!(tiles.len(), self.len(), "one tile per grid cell");
        let mut out = vec![T::default(); self.width * self.height];
        for (k, tile) in tiles.iter().enumerate() {
            let (r0, c0, h, w) = self.interior(k);
            for r in 0..h {
                let src = &tile[r * self.side..r * self.side + w];
                let dst = (r0 + r) * self.width + c0;
                out[dst..dst + w].copy_from_slice(src);
            }
        }
        out
    }

    /// Cuts `side*side` tiles out of a full-size plane, padding per `policy`.
    pub fn cut<T: Copy>(&self, plane: &[T], policy: PadPolicy) -> Vec<Vec<T>> {
        assert_eq!(plane.len(), self.width * self.height);
        (0..self.len())
            .map(|k| {
                let (r0, c0, _, _) = self.interior(k);
                let mut tile = Vec::with_capacity(self.side * self.side);
                for r in 0..self.side {
                    let sr = policy.index((r0 + r) as isize, self.height);
                    for c in 0..self.side {
                        let sc = policy.index((c0 + c) as isize, self.width);
                        tile.push(plane[sr * self.width + sc]);
                    }
                }
                tile
            })
            .collect()
    }
}

/// Tiles `img` into `side`×`side` patches in row-major order.
///
/// Boundary patches are padded according to `pad_policy`. Sides larger than
/// four times the shorter image dimension are rejected.
pub fn tile_patches<T: Real>(
    img: &Image<T>,
    side: usize,
    pad_policy: PadPolicy,
) -> Result<PatchGrid<T>> {
    if side < MIN_PATCH_SIDE {
        return Err(Error::PatchTooSmall(side));
    }
    if side > img.width.min(img.height) * 4 {
        return Err(Error::PatchTooLarge {
            side,
            width: img.width,
            height: img.height,
        });
    }
    let geom = GridGeometry::new(img.width, img.height, side);
    let patches = geom
        .cut(&img.data, pad_policy)
        .into_iter()
        .enumerate()
        .map(|(k, data)| {
            let (r0, c0, _, _) = geom.interior(k);
            Patch {
                side,
                origin: (r0, c0),
                data,
            }
        })
        .collect();
    Ok(PatchGrid {
        patches,
        rows: geom.rows,
        cols: geom.cols,
        side,
        width: img.width,
        height: img.height,
        pad_policy,
    })
}

/// Loads a PNG or binary PGM/PPM file as a luma image in `[0, 1]`.
///
/// RGB input is reduced with fixed 0.299/0.587/0.114 weights; alpha is ignored.
pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "unrecognized file signature".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| match e {
        ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        ImageError::IoError(io) => Error::io(path, io),
        other => Error::CorruptData {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    luma_from_dynamic(&decoded).map_err(|reason| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason,
    })
}

fn luma_from_dynamic<T: Real>(img: &DynamicImage) -> std::result::Result<Image<T>, String> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b.pixels().map(|p| luma(p.0, 255.0)).collect(),
        DynamicImage::ImageRgba8(b) => b
            .pixels()
            .map(|p| luma([p.0[0], p.0[1], p.0[2]], 255.0))
            .collect(),
        DynamicImage::ImageRgb16(b) => b.pixels().map(|p| luma(p.0, 65535.0)).collect(),
        DynamicImage::ImageRgba16(b) => b
            .pixels()
            .map(|p| luma([p.0[0], p.0[1], p.0[2]], 65535.0))
            .collect(),
        other => return Err(format!("pixel layout {:?} is not 8/16-bit gray or RGB", other.color())),
    };
    Image::new(w, h, data.into_iter().map(T::lit).collect()).map_err(|e| e.to_string())
}

fn luma<P: Into<f64> + Copy>(rgb: [P; 3], full_scale: f64) -> f64 {
    let [r, g, b] = rgb.map(|c| c.into() / full_scale);
    (LUMA_R * r + LUMA_G * g + LUMA_B * b).clamp(0.0, 1.0)
}

/// Rounds `[0, 1]` values to 8-bit codes.
pub fn to_u8<T: Real>(data: &[T]) -> Vec<u8> {
    data.iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Writes an 8-bit grayscale file; the format follows the extension (`.png`, `.pgm`).
pub fn save_gray8(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_raw(width as u32, height as u32, pixels.to_vec())
        .ok_or_else(|| Error::shape(width * height, pixels.len()))?;
    let is_pnm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "pnm"));
    let result = if is_pnm {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let enc = image::codecs::pnm::PnmEncoder::new(std::io::BufWriter::new(file)).with_subtype(
            image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary),
        );
        buf.write_with_encoder(enc)
    } else {
        buf.save(path)
    };
    result.map_err(|e| match e {
        ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })
}

/// Min-max normalizes a plane to 8-bit codes. Returns the codes and the
/// `(min, max)` used; a constant plane maps to all zeros.
pub fn normalize_to_u8<T: Real>(data: &[T]) -> (Vec<u8>, f64, f64) {
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let v = v.as_f64();
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    let codes = data
        .iter()
        .map(|v| {
            if span > 0.0 {
                ((v.as_f64() - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    (codes, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Image<f64> {
        Image::from_fn(w, h, |r, c| ((r * w + c) % 251) as f64 / 250.0).unwrap()
    }

    #[test]
    fn image_rejects_out_of_range_and_bad_shape() {
        assert!(Image::new(2, 2, vec![0.0, 1.0, 0.5, 1.5]).is_err());
        assert!(Image::new(2, 2, vec![0.0, f64::NAN, 0.5, 0.5]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::<f64>::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn exact_division_gives_four_by_four() {
        let grid = tile_patches(&ramp(256, 256), 64, PadPolicy::Reflect).unwrap();
        assert_eq!((grid.rows(), grid.cols(), grid.len()), (4, 4, 16));
        assert!(grid.patches().iter().all(|p| p.side() == 64));
        assert_eq!(grid.patches()[5].origin(), (64, 64));
    }

    #[test]
    fn non_divisible_size_pads_by_reflection() {
        let img = ramp(100, 100);
        let grid = tile_patches(&img, 64, PadPolicy::Reflect).unwrap();
        assert_eq!((grid.rows(), grid.cols()), (2, 2));
        let last = &grid.patches()[3];
        assert_eq!(last.origin(), (64, 64));
        // column 36 of the tile is image column 100 -> reflects to 99
        assert_eq!(last.get(0, 36), img.get(64, 99));
        assert_eq!(last.get(0, 37), img.get(64, 98));
        assert_eq!(last.get(36, 0), img.get(99, 64));

        let clamped = tile_patches(&img, 64, PadPolicy::Clamp).unwrap();
        assert_eq!(clamped.patches()[3].get(0, 63), img.get(64, 99));
    }

    #[test]
    fn single_patch_is_identity() {
        for policy in [PadPolicy::Reflect, PadPolicy::Clamp] {
            let img = Image::filled(64, 64, 0.25f64).unwrap();
            let grid = tile_patches(&img, 64, policy).unwrap();
            assert_eq!(grid.len(), 1);
            assert_eq!(grid.patches()[0].data(), img.data());
        }
    }

    #[test]
    fn side_guards() {
        let img = ramp(10, 10);
        assert!(matches!(
            tile_patches(&img, 7, PadPolicy::Reflect),
            Err(Error::PatchTooSmall(7))
        ));
        assert!(matches!(
            tile_patches(&img, 41, PadPolicy::Reflect),
            Err(Error::PatchTooLarge { .. })
        ));
        // wider than the image but within the guard: padding wraps by reflection
        let grid = tile_patches(&img, 40, PadPolicy::Reflect).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.stitch(), img);
    }

    #[test]
    fn reflect_index_is_symmetric_and_periodic() {
        let seq: Vec<usize> = (-5..9).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(seq, vec![3, 3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0, 0]);
        assert_eq!(reflect_index(-3, 1), 0);
    }

    #[test]
    fn loads_gray8_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        save_gray8(&path, 2, 2, &[0, 255, 128, 64]).unwrap();
        let img: Image<f64> = load_image(&path).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn loads_pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        let codes: Vec<u8> = (0..64).map(|i| (i * 4) as u8).collect();
        save_gray8(&path, 8, 8, &codes).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5"));
        let img: Image<f32> = load_image(&path).unwrap();
        assert_eq!(to_u8(img.data()), codes);
    }

    #[test]
    fn rgb_uses_fixed_luma_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        image::RgbImage::from_raw(1, 1, vec![255, 0, 0])
            .unwrap()
            .save(&path)
            .unwrap();
        let img: Image<f64> = load_image(&path).unwrap();
        assert!((img.data()[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn sixteen_bit_full_scale_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w16.png");
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![65535u16, 0])
            .unwrap()
            .save(&path)
            .unwrap();
        let img: Image<f64> = load_image(&path).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0]);
    }

    #[test]
    fn load_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.png");
        match load_image::<f64>(&missing) {
            Err(Error::FileNotFound(p)) => assert_eq!(p, missing),
            other => panic!("unexpected {other:?}"),
        }
        let junk = dir.path().join("junk.bin");
        std::fs::write(&junk, b"definitely not an image").unwrap();
        assert!(matches!(
            load_image::<f64>(&junk),
            Err(Error::UnsupportedFormat { .. })
        ));
        let broken = dir.path().join("broken.png");
        let mut bytes = Vec::new();
        image::GrayImage::from_raw(16, 16, vec![7; 256])
            .unwrap()
            .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .unwrap();
        bytes.truncate(bytes.len() / 2);
        std::fs::write(&broken, &bytes).unwrap();
        match load_image::<f64>(&broken) {
            Err(Error::CorruptData { path, .. }) | Err(Error::Io { path, .. }) => {
                assert_eq!(path, broken)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn stitch_roundtrips_bit_exactly(w in 8usize..90, h in 8usize..90, side in 8usize..40, clamp in any::<bool>()) {
            prop_assume!(side <= w.min(h) * 4);
            let img = Image::from_fn(w, h, |r, c| (((r * 31 + c * 17) % 97) as f64) / 96.0).unwrap();
            let policy = if clamp { PadPolicy::Clamp } else { PadPolicy::Reflect };
            let grid = tile_patches(&img, side, policy).unwrap();
            prop_assert_eq!(grid.len(), grid.rows() * grid.cols());
            prop_assert_eq!(grid.stitch(), img.clone());
            prop_assert_eq!(tile_patches(&img, side, policy).unwrap(), grid);
        }
    }
}
