use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Model, Sample};
use crate::error::{Error, Result};
use crate::scalar::Real;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of the dataset used for training; the rest is held out.
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 12,
            split_ratio: 0.8,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidConfig("split_ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub mean_loss: f64,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training-set loss before the first update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochStats>,
    pub final_holdout_accuracy: f64,
    pub train_size: usize,
    pub holdout_size: usize,
}

/// Seeded shuffle of `0..n` cut into `(train, holdout)` at `ratio`.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let cut = if n < 2 {
        n
    } else {
        ((n as f64 * ratio).round() as usize).clamp(1, n - 1)
    };
    let holdout = idx.split_off(cut);
    (idx, holdout)
}

/// Probabilities for a set of samples, evaluated in fixed-size chunks.
pub fn predict<T: Real>(model: &Model<T>, samples: &[&Sample<T>]) -> Result<Vec<T>> {
    let variant = model.config().variant;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let inputs: Vec<Vec<&[T]>> = chunk.iter().map(|s| s.inputs(variant)).collect();
        out.extend(model.predict_batch(&inputs)?);
    }
    Ok(out)
}

/// Fraction of samples whose `p >= 0.5` decision matches the label.
pub fn accuracy_at_half<T: Real>(probs: &[T], labels: &[u8]) -> f64 {
    if probs.is_empty() {
        return f64::NAN;
    }
    let half = T::lit(0.5);
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= half) == (y == 1))
        .count();
    hits as f64 / probs.len() as f64
}

struct Adam<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: i32,
    lr: T,
}

impl<T: Real> Adam<T> {
    fn new(model: &Model<T>, lr: f64) -> Self {
        Self {
            m: model.zero_grads(),
            v: model.zero_grads(),
            step: 0,
            lr: T::lit(lr),
        }
    }

    fn update(&mut self, model: &mut Model<T>, grads: &[Vec<T>]) {
        self.step += 1;
        let b1 = T::lit(ADAM_BETA1);
        let b2 = T::lit(ADAM_BETA2);
        let eps = T::lit(ADAM_EPS);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for (((p, g), m), v) in model
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Mini-batch Adam on mean binary cross-entropy.
///
/// The dataset is split with [`split_indices`] using `cfg.seed`; the training
/// part is reshuffled every epoch from the same seeded stream, so a run is
/// bit-reproducible.
pub fn train<T: Real>(
    mut model: Model<T>,
    dataset: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<(Model<T>, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::DegenerateDataset("empty dataset".into()));
    }
    let positives = dataset.iter().filter(|s| s.label == 1).count();
    if positives == 0 || positives == dataset.len() {
        return Err(Error::DegenerateDataset(format!(
            "only label {} present",
            dataset[0].label
        )));
    }
    if let Some(bad) = dataset.iter().find(|s| s.label > 1) {
        return Err(Error::DegenerateDataset(format!("label {} is not 0/1", bad.label)));
    }
    let variant = model.config().variant;
    let (train_idx, holdout_idx) = split_indices(dataset.len(), cfg.split_ratio, cfg.seed);
    let holdout: Vec<&Sample<T>> = holdout_idx.iter().map(|&i| &dataset[i]).collect();
    let holdout_labels: Vec<u8> = holdout.iter().map(|s| s.label).collect();

    let train_set: Vec<&Sample<T>> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let train_labels: Vec<u8> = train_set.iter().map(|s| s.label).collect();
    let initial_probs = predict(&model, &train_set)?;
    let initial_loss = initial_probs
        .iter()
        .zip(&train_labels)
        .map(|(&p, &y)| super::bce_loss(p, y).as_f64())
        .sum::<f64>()
        / train_set.len() as f64;

    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order = train_idx.clone();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<Vec<&[T]>> = chunk.iter().map(|&i| dataset[i].inputs(variant)).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| dataset[i].label).collect();
            let (loss, grads) = model.loss_and_grads(&inputs, &labels)?;
            adam.update(&mut model, &grads);
            loss_sum += loss.as_f64();
            batches += 1;
        }
        let probs = predict(&model, &holdout)?;
        epochs.push(EpochStats {
            epoch,
            mean_loss: loss_sum / batches.max(1) as f64,
            holdout_accuracy: accuracy_at_half(&probs, &holdout_labels),
        });
    }
    let final_holdout_accuracy = match epochs.last() {
        Some(e) => e.holdout_accuracy,
        None => accuracy_at_half(&predict(&model, &holdout)?, &holdout_labels),
    };
    let report = TrainReport {
        initial_loss,
        epochs,
        final_holdout_accuracy,
        train_size: train_idx.len(),
        holdout_size: holdout_idx.len(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetConfig, Variant};

    fn separable(n: usize, side: usize) -> Vec<Sample<f32>> {
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let hf: Vec<f32> = (0..side * side)
                    .map(|p| {
                        if label == 1 {
                            1.0 + ((p * 7 + i) % 5) as f32 * 0.2
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let lf = vec![((i * 37) % 100) as f32 / 100.0; side * side];
                Sample {
                    side,
                    maps: [hf, lf.clone(), lf],
                    label,
                }
            })
            .collect()
    }

    fn small_net() -> NetConfig {
        NetConfig {
            branch_channels: vec![4, 8],
            early_tap_channels: 4,
            input_side: 16,
            variant: Variant::FsBand,
            seed: 3,
            ..NetConfig::default()
        }
    }

    #[test]
    fn split_is_seeded_and_exhaustive() {
        let (a, b) = split_indices(10, 0.8, 1);
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.8, 1), (a, b));
        assert_ne!(split_indices(10, 0.8, 2).0, split_indices(10, 0.8, 1).0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let data: Vec<_> = separable(10, 16).into_iter().filter(|s| s.label == 1).collect();
        let model = Model::init(&small_net()).unwrap();
        assert!(matches!(
            train(model, &data, &TrainConfig::default()),
            Err(Error::DegenerateDataset(_))
        ));
        let model = Model::<f32>::init(&small_net()).unwrap();
        assert!(matches!(
            train(model, &[], &TrainConfig::default()),
            Err(Error::DegenerateDataset(_))
        ));
    }

    #[test]
    fn separable_data_is_learned_quickly() {
        let data = separable(200, 16);
        let model = Model::init(&small_net()).unwrap();
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        let (_, report) = train(model, &data, &cfg).unwrap();
        assert!((report.initial_loss - std::f64::consts::LN_2).abs() < 0.05);
        assert_eq!(report.final_holdout_accuracy, 1.0, "{report:?}");
    }

    #[test]
    fn training_is_reproducible() {
        let data = separable(64, 16);
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let (m1, r1) = train(Model::init(&small_net()).unwrap(), &data, &cfg).unwrap();
        let (m2, r2) = train(Model::init(&small_net()).unwrap(), &data, &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
    }
}
