use std::time::Instant;

use crate::dataset::sample_from_patch;
use crate::error::{Error, Result};
use crate::freqmaps::LfmConfig;
use crate::imgcore::Patch;
use crate::net::Model;
use crate::scalar::Real;

pub const MIN_BENCH_PATCHES: usize = 10;
pub const MIN_BENCH_REPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedReport {
    /// Median over repetitions of seconds per patch.
    pub seconds_per_patch: f64,
    pub per_rep: Vec<f64>,
    pub patches: usize,
}

impl SpeedReport {
    /// Coefficient of variation of the per-repetition timings.
    pub fn cv(&self) -> f64 {
        let n = self.per_rep.len() as f64;
        let mean = self.per_rep.iter().sum::<f64>() / n;
        let var = self.per_rep.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        var.sqrt() / mean
    }
}

fn run_once<T: Real>(model: &Model<T>, patches: &[Patch<T>], cfg: &LfmConfig) -> Result<()> {
    let variant = model.config().variant;
    for p in patches {
        let s = sample_from_patch(p, 0, cfg)?;
        let prob = model.predict_batch(&[s.inputs(variant)])?;
        std::hint::black_box(prob);
    }
    Ok(())
}

/// Times the per-patch pipeline (frequency maps and a single-patch forward
/// pass) sequentially over `patches`, `repetitions` times after one warm-up
/// pass over a few patches.
pub fn benchmark_speed_report<T: Real>(
    model: &Model<T>,
    patches: &[Patch<T>],
    repetitions: usize,
    cfg: &LfmConfig,
) -> Result<SpeedReport> {
    if patches.len() < MIN_BENCH_PATCHES {
        return Err(Error::InvalidConfig(format!(
            "benchmark needs at least {MIN_BENCH_PATCHES} patches, got {}",
            patches.len()
        )));
    }
    if repetitions < MIN_BENCH_REPS {
        return Err(Error::InvalidConfig(format!(
            "benchmark needs at least {MIN_BENCH_REPS} repetitions, got {repetitions}"
        )));
    }
    run_once(model, &patches[..4], cfg)?;
    let mut per_rep = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t0 = Instant::now();
        run_once(model, patches, cfg)?;
        per_rep.push(t0.elapsed().as_secs_f64() / patches.len() as f64);
    }
    let mut sorted = per_rep.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    Ok(SpeedReport {
        seconds_per_patch: median,
        per_rep,
        patches: patches.len(),
    })
}

/// Median seconds per patch; see [`benchmark_speed_report`].
pub fn benchmark_speed<T: Real>(
    model: &Model<T>,
    patches: &[Patch<T>],
    repetitions: usize,
    cfg: &LfmConfig,
) -> Result<f64> {
    benchmark_speed_report(model, patches, repetitions, cfg).map(|r| r.seconds_per_patch)
}
