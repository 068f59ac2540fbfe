use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bench::benchmark_speed;
use super::metrics::{auprc, auroc, best_threshold_accuracy, Orientation, ScoredSet};
use crate::dataset::load_samples;
use crate::error::Result;
use crate::freqmaps::LfmConfig;
use crate::imgcore::Patch;
use crate::net::{predict, split_indices, train, Model, NetConfig, Sample, TrainConfig, TrainReport, Variant};
use crate::scalar::Real;
use crate::synth::DatasetManifest;

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub auroc: f64,
    pub auprc: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub orientation: Orientation,
    pub seconds_per_patch: Option<f64>,
}

impl EvalReport {
    pub fn from_scores(name: impl Into<String>, s: &ScoredSet) -> Result<Self> {
        let t = best_threshold_accuracy(s);
        Ok(Self {
            name: name.into(),
            auroc: auroc(s)?,
            auprc: auprc(s)?,
            accuracy: t.accuracy,
            threshold: t.threshold,
            orientation: t.orientation,
            seconds_per_patch: None,
        })
    }
}

/// Scores a model on samples.
pub fn evaluate<T: Real>(name: &str, model: &Model<T>, samples: &[&Sample<T>]) -> Result<EvalReport> {
    let probs = predict(model, samples)?;
    let set = ScoredSet::new(
        probs.iter().map(|p| p.as_f64()).collect(),
        samples.iter().map(|s| s.label).collect(),
    )?;
    EvalReport::from_scores(name, &set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub lfm: LfmConfig,
    /// Patches timed per variant; 0 skips timing.
    pub bench_patches: usize,
    pub bench_reps: usize,
    /// Train variants concurrently. Every variant is seeded independently,
    /// so the table is the same either way.
    pub parallel: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            train: TrainConfig::default(),
            lfm: LfmConfig::default(),
            bench_patches: 20,
            bench_reps: 3,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: EvalReport,
    pub train: TrainReport,
}

fn run_variant<T: Real>(
    variant: Variant,
    samples: &[Sample<T>],
    holdout: &[&Sample<T>],
    patches: &[Patch<T>],
    cfg: &AblationConfig,
) -> Result<AblationRow> {
    let net = NetConfig { variant, ..cfg.net.clone() };
    let (model, train_report) = train(Model::init(&net)?, samples, &cfg.train)?;
    let mut report = evaluate(variant.name(), &model, holdout)?;
    if cfg.bench_patches > 0 {
        let n = cfg.bench_patches.min(patches.len());
        report.seconds_per_patch = Some(benchmark_speed(&model, &patches[..n], cfg.bench_reps, &cfg.lfm)?);
    }
    Ok(AblationRow {
        variant,
        report,
        train: train_report,
    })
}

/// Trains and evaluates each variant on the same split and seed.
/// `patches` are the source patches of `samples`, used for timing.
pub fn run_ablation_on<T: Real>(
    samples: &[Sample<T>],
    patches: &[Patch<T>],
    variants: &[Variant],
    cfg: &AblationConfig,
) -> Result<Vec<AblationRow>> {
    let (_, holdout_idx) = split_indices(samples.len(), cfg.train.split_ratio, cfg.train.seed);
    let holdout: Vec<&Sample<T>> = holdout_idx.iter().map(|&i| &samples[i]).collect();
    let run = |&v: &Variant| run_variant(v, samples, &holdout, patches, cfg);
    if cfg.parallel {
        variants.par_iter().map(run).collect()
    } else {
        variants.iter().map(run).collect()
    }
}

/// [`run_ablation_on`] for a corpus on disk.
pub fn run_ablation(manifest: &DatasetManifest, variants: &[Variant], cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    let (patches, samples) = load_samples::<f32>(manifest, &cfg.lfm)?;
    run_ablation_on(&samples, &patches, variants, cfg)
}
