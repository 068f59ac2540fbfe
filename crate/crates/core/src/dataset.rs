//! Turning patches into classifier samples (high-frequency map,
//! low-frequency map and raw intensities).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::freqmaps::{hfm, lfm, LfmConfig};
use crate::imgcore::Patch;
use crate::net::Sample;
use crate::scalar::Real;
use crate::synth::DatasetManifest;

pub fn sample_from_patch<T: Real>(patch: &Patch<T>, label: u8, cfg: &LfmConfig) -> Result<Sample<T>> {
    let hf = hfm(patch);
    let lf = lfm(patch, cfg)?;
    Ok(Sample {
        side: patch.side(),
        maps: [hf.data, lf.data, patch.data().to_vec()],
        label,
    })
}

/// Builds samples in parallel; output order follows `patches`.
pub fn build_samples<T: Real>(patches: &[Patch<T>], labels: &[u8], cfg: &LfmConfig) -> Result<Vec<Sample<T>>> {
    if patches.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: patches.len(),
            actual: labels.len(),
        });
    }
    cfg.validate()?;
    patches
        .par_iter()
        .zip(labels.par_iter())
        .map(|(p, &y)| sample_from_patch(p, y, cfg))
        .collect()
}

/// Source patches with their samples, in manifest order.
pub type Corpus<T> = (Vec<Patch<T>>, Vec<Sample<T>>);

/// Loads every manifest patch and builds its sample.
pub fn load_samples<T: Real>(manifest: &DatasetManifest, cfg: &LfmConfig) -> Result<Corpus<T>> {
    let patches = manifest.load_patches()?;
    let labels: Vec<u8> = manifest.records.iter().map(|r| r.label).collect();
    let samples = build_samples(&patches, &labels, cfg)?;
    Ok((patches, samples))
}
