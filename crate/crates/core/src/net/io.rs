//! Weights file: `"FSBD"`, format version (u16 LE), config length (u32 LE),
//! JSON-encoded [`NetConfig`], every parameter tensor as little-endian f32
//! in declaration order, then a CRC32 of all preceding bytes (u32 LE).

use std::path::Path;

use super::{Model, NetConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"FSBD";
pub const FORMAT_VERSION: u16 = 1;

pub fn model_to_bytes<T: Real>(model: &Model<T>) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config())?;
    let mut out = Vec::with_capacity(14 + config.len() + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    for tensor in model.tensors() {
        for v in tensor {
            let f = v.to_f32().ok_or_else(|| Error::BadModelFile("parameter overflows f32".into()))?;
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn model_from_bytes<T: Real>(bytes: &[u8]) -> Result<Model<T>> {
    if bytes.len() < 6 {
        return Err(Error::ChecksumMismatch);
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadModelFile("missing FSBD magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 14 {
        return Err(Error::ChecksumMismatch);
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::ChecksumMismatch);
    }
    let config_len = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
    let config_end = 10usize
        .checked_add(config_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| Error::BadModelFile("config length past end of file".into()))?;
    let config: NetConfig = serde_json::from_slice(&body[10..config_end])?;
    let mut model = Model::<T>::init(&config)?;
    let mut values = body[config_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let expected = model.param_count();
    if body.len() - config_end != expected * 4 {
        return Err(Error::BadModelFile(format!(
            "expected {expected} parameters, found {} bytes",
            body.len() - config_end
        )));
    }
    for tensor in model.tensors_mut() {
        for v in tensor.iter_mut() {
            let f = values.next().expect("length checked");
            *v = T::from_f32(f).expect("f32 converts to every Real");
        }
    }
    Ok(model)
}

pub fn save_model<T: Real>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = model_to_bytes(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Variant;

    fn small() -> Model<f32> {
        Model::init(&NetConfig {
            branch_channels: vec![3, 5],
            early_tap_channels: 2,
            input_side: 16,
            zero_output_init: false,
            seed: 9,
            ..NetConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fsbd");
        let m = small();
        save_model(&m, &path).unwrap();
        let back: Model<f32> = load_model(&path).unwrap();
        assert_eq!(back, m);
        let x: Vec<f32> = (0..256).map(|i| (i % 17) as f32 / 16.0).collect();
        let a = m.predict_batch(&[vec![&x[..], &x[..]]]).unwrap();
        let b = back.predict_batch(&[vec![&x[..], &x[..]]]).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn header_layout() {
        let bytes = model_to_bytes(&small()).unwrap();
        assert_eq!(&bytes[..4], b"FSBD");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), FORMAT_VERSION);
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = model_to_bytes(&small()).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 10, bytes.len() / 2, 12, 7] {
            assert!(
                matches!(model_from_bytes::<f32>(&bytes[..cut]), Err(Error::ChecksumMismatch)),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn bumped_version_is_rejected() {
        let mut bytes = model_to_bytes(&small()).unwrap();
        bytes[4] = bytes[4].wrapping_add(1);
        assert!(matches!(
            model_from_bytes::<f32>(&bytes),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn flipped_payload_bit_is_caught() {
        let mut bytes = model_to_bytes(&small()).unwrap();
        let mid = bytes.len() - 40;
        bytes[mid] ^= 0x10;
        assert!(matches!(
            model_from_bytes::<f32>(&bytes),
            Err(Error::ChecksumMismatch)
        ));
    }

    #[test]
    fn variant_survives_the_roundtrip() {
        let m = Model::<f32>::init(&NetConfig {
            branch_channels: vec![2],
            early_tap_channels: 1,
            input_side: 8,
            variant: Variant::SbI,
            ..NetConfig::default()
        })
        .unwrap();
        let back: Model<f32> = model_from_bytes(&model_to_bytes(&m).unwrap()).unwrap();
        assert_eq!(back.config().variant, Variant::SbI);
        assert_eq!(back.branches().len(), 1);
    }
}
