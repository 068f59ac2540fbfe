use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    affine_rows, affine_rows_backward, col2im, conv_out, im2col, relu_backward, relu_in_place,
};
use super::{NetConfig, FUSED_DIM};
use crate::error::{Error, Result};
use crate::freqmaps::{HfMap, LfMap};
use crate::scalar::Real;

/// Probabilities are kept this far from 0 and 1.
pub const PROB_CLAMP: f64 = 1e-7;

/// 3×3 stride-2 convolution; `weight` is `out_c × (in_c * 9)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Fully-connected layer; `weight` is `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub convs: Vec<Conv<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
}

/// Classifier parameters. Branches own their tensors; nothing is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: NetConfig,
    branches: Vec<Branch<T>>,
    head: Head<T>,
}

/// Gradient buffers aligned with [`Model::tensors`].
pub type Grads<T> = Vec<Vec<T>>;

fn he_uniform<T: Real>(rng: &mut ChaCha8Rng, fan_in: usize, len: usize) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    (0..len).map(|_| T::lit(dist.sample(rng))).collect()
}

impl<T: Real> Model<T> {
    /// Deterministic initialization. Branch `i` draws from RNG stream `i + 1`
    /// and the head from stream 0, all keyed by `cfg.seed`.
    pub fn init(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let branches = (0..cfg.variant.inputs().len())
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64 + 1);
                let mut in_c = 1;
                let convs = cfg
                    .branch_channels
                    .iter()
                    .map(|&out_c| {
                        let conv = Conv {
                            in_c,
                            out_c,
                            weight: he_uniform(&mut rng, in_c * 9, out_c * in_c * 9),
                            bias: vec![T::zero(); out_c],
                        };
                        in_c = out_c;
                        conv
                    })
                    .collect();
                Branch { convs }
            })
            .collect::<Vec<_>>();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0);
        let feat = cfg.branch_features() * branches.len();
        let fc1 = Dense {
            inputs: feat,
            outputs: FUSED_DIM,
            weight: he_uniform(&mut rng, feat, FUSED_DIM * feat),
            bias: vec![T::zero(); FUSED_DIM],
        };
        let fc2_weight = if cfg.zero_output_init {
            vec![T::zero(); FUSED_DIM]
        } else {
            he_uniform(&mut rng, FUSED_DIM, FUSED_DIM)
        };
        let fc2 = Dense {
            inputs: FUSED_DIM,
            outputs: 1,
            weight: fc2_weight,
            bias: vec![T::zero()],
        };
        Ok(Self {
            config: cfg.clone(),
            branches,
            head: Head { fc1, fc2 },
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn head(&self) -> &Head<T> {
        &self.head
    }

    /// Branch fed by the high-frequency map in the dual-branch detector.
    pub fn branch_hf(&self) -> &Branch<T> {
        &self.branches[0]
    }

    /// Branch fed by the low-frequency map in the dual-branch detector.
    pub fn branch_lf(&self) -> Option<&Branch<T>> {
        self.branches.get(1)
    }

    /// Every parameter tensor in declaration order: per branch each conv's
    /// weight then bias, then fc1 weight, fc1 bias, fc2 weight, fc2 bias.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in &self.branches {
            for c in &b.convs {
                out.push(&c.weight);
                out.push(&c.bias);
            }
        }
        for d in [&self.head.fc1, &self.head.fc2] {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = Vec::new();
        for b in &mut self.branches {
            for c in &mut b.convs {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
        }
        let Head { fc1, fc2 } = &mut self.head;
        for d in [fc1, fc2] {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    /// Names matching [`Model::tensors`], e.g. `branch0.conv1.weight`.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (bi, b) in self.branches.iter().enumerate() {
            for ci in 0..b.convs.len() {
                out.push(format!("branch{bi}.conv{ci}.weight"));
                out.push(format!("branch{bi}.conv{ci}.bias"));
            }
        }
        for name in ["fc1", "fc2"] {
            out.push(format!("{name}.weight"));
            out.push(format!("{name}.bias"));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.tensors()
            .iter()
            .map(|t| vec![T::zero(); t.len()])
            .collect()
    }

    /// Banded probability for the dual-branch detector.
    pub fn forward(&self, hf: &HfMap<T>, lf: &LfMap<T>) -> Result<T> {
        if self.branches.len() != 2 {
            return Err(Error::InvalidConfig(format!(
                "forward(hf, lf) needs a dual-branch model, this one is {}",
                self.config.variant
            )));
        }
        let p = self.predict_batch(&[vec![&hf.data[..], &lf.data[..]]])?;
        Ok(p[0])
    }

    /// Probabilities for a batch; `inputs[i][b]` is sample `i`'s input for branch `b`.
    pub fn predict_batch(&self, inputs: &[Vec<&[T]>]) -> Result<Vec<T>> {
        self.check_inputs(inputs)?;
        Ok(self.run(inputs, false).probs)
    }

    /// Mean binary cross-entropy over a batch.
    pub fn loss(&self, inputs: &[Vec<&[T]>], labels: &[u8]) -> Result<T> {
        let p = self.predict_batch(inputs)?;
        Ok(mean_bce(&p, labels))
    }

    /// Mean loss and its gradient with respect to every parameter tensor.
    pub fn loss_and_grads(&self, inputs: &[Vec<&[T]>], labels: &[u8]) -> Result<(T, Grads<T>)> {
        let (loss, grads, _) = self.backprop(inputs, labels, false)?;
        Ok((loss, grads))
    }

    /// Gradient of the mean loss with respect to each branch's input maps,
    /// laid out like `inputs`.
    pub fn input_grads(&self, inputs: &[Vec<&[T]>], labels: &[u8]) -> Result<Vec<Vec<Vec<T>>>> {
        let (_, _, dx) = self.backprop(inputs, labels, true)?;
        Ok(dx.expect("requested"))
    }

    /// Sign pattern of every ReLU pre-activation for a batch, in a fixed
    /// order. Finite-difference checks use it to detect kinks.
    pub fn relu_pattern(&self, inputs: &[Vec<&[T]>]) -> Result<Vec<bool>> {
        self.check_inputs(inputs)?;
        let tape = self.run(inputs, true);
        let mut pattern = Vec::new();
        for br in &tape.branches {
            for pre in &br.pre {
                pattern.extend(pre.iter().map(|v| *v > T::zero()));
            }
        }
        pattern.extend(tape.z1.iter().map(|v| *v > T::zero()));
        Ok(pattern)
    }

    fn check_inputs(&self, inputs: &[Vec<&[T]>]) -> Result<()> {
        let side = self.config.input_side;
        for sample in inputs {
            if sample.len() != self.branches.len() {
                return Err(Error::shape(
                    format!("{} branch inputs", self.branches.len()),
                    sample.len(),
                ));
            }
            if let Some(bad) = sample.iter().find(|m| m.len() != side * side) {
                return Err(Error::shape(
                    format!("{side}x{side} input map"),
                    format!("{} values", bad.len()),
                ));
            }
        }
        Ok(())
    }

    fn run(&self, inputs: &[Vec<&[T]>], keep_pre: bool) -> Tape<T> {
        let batch = inputs.len();
        let side = self.config.input_side;
        let early = self.config.early_tap_channels;
        let feat_per_branch = self.config.branch_features();
        let n_feat = feat_per_branch * self.branches.len();
        // features laid out (n_feat × batch)
        let mut features = vec![T::zero(); n_feat * batch];
        let mut branches = Vec::with_capacity(self.branches.len());

        for (bi, branch) in self.branches.iter().enumerate() {
            let mut x: Vec<T> = Vec::with_capacity(batch * side * side);
            for sample in inputs {
                x.extend_from_slice(sample[bi]);
            }
            let mut tape = BranchTape {
                input: x,
                cols: Vec::new(),
                outs: Vec::new(),
                pre: Vec::new(),
                sides: Vec::new(),
            };
            let mut h = side;
            for (ci, conv) in branch.convs.iter().enumerate() {
                let src = if ci == 0 { &tape.input } else { &tape.outs[ci - 1] };
                let cols = im2col(src, conv.in_c, batch, h, h);
                let ho = conv_out(h);
                let mut out = affine_rows(&conv.weight, &conv.bias, &cols, conv.in_c * 9, batch * ho * ho);
                if keep_pre {
                    tape.pre.push(out.clone());
                }
                relu_in_place(&mut out);
                tape.cols.push(cols);
                tape.outs.push(out);
                tape.sides.push((h, ho));
                h = ho;
            }

            let base = bi * feat_per_branch;
            let first = &tape.outs[0];
            let area0 = tape.sides[0].1 * tape.sides[0].1;
            pool_into(first, early, batch, area0, &mut features[base * batch..]);
            let last = tape.outs.last().expect("at least one stage");
            let c_last = branch.convs.last().expect("at least one stage").out_c;
            let area_last = tape.sides.last().unwrap().1.pow(2);
            pool_into(last, c_last, batch, area_last, &mut features[(base + early) * batch..]);
            branches.push(tape);
        }

        let Head { fc1, fc2 } = &self.head;
        let z1 = affine_rows(&fc1.weight, &fc1.bias, &features, n_feat, batch);
        let mut a1 = z1.clone();
        relu_in_place(&mut a1);
        let z2 = affine_rows(&fc2.weight, &fc2.bias, &a1, FUSED_DIM, batch);
        let raw: Vec<T> = z2.iter().map(|&z| sigmoid(z)).collect();
        let lo = T::lit(PROB_CLAMP);
        let probs = raw.iter().map(|&p| p.max(lo).min(T::one() - lo)).collect();
        Tape {
            branches,
            features,
            z1,
            a1,
            raw,
            probs,
        }
    }

    fn backprop(
        &self,
        inputs: &[Vec<&[T]>],
        labels: &[u8],
        want_input_grads: bool,
    ) -> Result<(T, Grads<T>, Option<Vec<Vec<Vec<T>>>>)> {
        self.check_inputs(inputs)?;
        if labels.len() != inputs.len() {
            return Err(Error::LengthMismatch {
                expected: inputs.len(),
                actual: labels.len(),
            });
        }
        let batch = inputs.len();
        let tape = self.run(inputs, false);
        let loss = mean_bce(&tape.probs, labels);
        let mut grads = self.zero_grads();
        let n_head = 4;
        let split = grads.len() - n_head;
        let (branch_grads, head_grads) = grads.split_at_mut(split);

        // d(mean BCE)/dz for a sigmoid output is (p - y) / B.
        let inv_b = T::one() / T::lit(batch as f64);
        let dz2: Vec<T> = tape
            .raw
            .iter()
            .zip(labels)
            .map(|(&p, &y)| (p - T::lit(y as f64)) * inv_b)
            .collect();

        let Head { fc1, fc2 } = &self.head;
        let (g_fc1, g_fc2) = head_grads.split_at_mut(2);
        let (g_w2, g_b2) = g_fc2.split_at_mut(1);
        let mut da1 = affine_rows_backward(
            &fc2.weight, &tape.a1, &dz2, FUSED_DIM, batch, &mut g_w2[0], &mut g_b2[0], true,
        )
        .expect("requested");
        relu_backward(&mut da1, &tape.a1);
        let n_feat = tape.features.len() / batch;
        let (g_w1, g_b1) = g_fc1.split_at_mut(1);
        let dfeat = affine_rows_backward(
            &fc1.weight, &tape.features, &da1, n_feat, batch, &mut g_w1[0], &mut g_b1[0], true,
        )
        .expect("requested");

        let early = self.config.early_tap_channels;
        let feat_per_branch = self.config.branch_features();
        let side = self.config.input_side;
        let mut input_grads = want_input_grads.then(|| vec![Vec::new(); batch]);
        let mut offset = 0;
        for (bi, (branch, bt)) in self.branches.iter().zip(&tape.branches).enumerate() {
            let n_conv = branch.convs.len();
            let g = &mut branch_grads[offset..offset + 2 * n_conv];
            offset += 2 * n_conv;
            let base = bi * feat_per_branch;
            let stages = bt.outs.len();

            // gradient w.r.t. each stage's post-ReLU output, seeded by the taps
            let mut d_out: Vec<T> = vec![T::zero(); bt.outs[stages - 1].len()];
            let c_last = branch.convs[stages - 1].out_c;
            let area_last = bt.sides[stages - 1].1.pow(2);
            unpool_into(&dfeat[(base + early) * batch..], c_last, batch, area_last, &mut d_out);
            for s in (0..stages).rev() {
                if s == 0 {
                    let area0 = bt.sides[0].1.pow(2);
                    unpool_into(&dfeat[base * batch..], early, batch, area0, &mut d_out);
                }
                relu_backward(&mut d_out, &bt.outs[s]);
                let conv = &branch.convs[s];
                let (h, ho) = bt.sides[s];
                let (gw, gb) = g[2 * s..2 * s + 2].split_at_mut(1);
                let need_dx = s > 0 || want_input_grads;
                let dcols = affine_rows_backward(
                    &conv.weight,
                    &bt.cols[s],
                    &d_out,
                    conv.in_c * 9,
                    batch * ho * ho,
                    &mut gw[0],
                    &mut gb[0],
                    need_dx,
                );
                if let Some(dcols) = dcols {
                    let dx = col2im(&dcols, conv.in_c, batch, h, h);
                    if s == 0 {
                        if let Some(ig) = input_grads.as_mut() {
                            for (i, chunk) in dx.chunks(side * side).enumerate() {
                                ig[i].push(chunk.to_vec());
                            }
                        }
                        d_out = Vec::new();
                    } else {
                        d_out = dx;
                    }
                }
            }
        }
        Ok((loss, grads, input_grads))
    }
}

struct BranchTape<T> {
    input: Vec<T>,
    cols: Vec<Vec<T>>,
    outs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    /// (input side, output side) per stage
    sides: Vec<(usize, usize)>,
}

struct Tape<T> {
    branches: Vec<BranchTape<T>>,
    features: Vec<T>,
    z1: Vec<T>,
    a1: Vec<T>,
    raw: Vec<T>,
    probs: Vec<T>,
}

/// Global average pool of the first `channels` channels of `(C, B, area)`
/// into `dst` laid out `(channels × B)`.
fn pool_into<T: Real>(act: &[T], channels: usize, batch: usize, area: usize, dst: &mut [T]) {
    let inv = T::one() / T::lit(area as f64);
    for c in 0..channels {
        for b in 0..batch {
            let plane = &act[(c * batch + b) * area..][..area];
            dst[c * batch + b] = plane.iter().copied().sum::<T>() * inv;
        }
    }
}

fn unpool_into<T: Real>(dfeat: &[T], channels: usize, batch: usize, area: usize, d_act: &mut [T]) {
    let inv = T::one() / T::lit(area as f64);
    for c in 0..channels {
        for b in 0..batch {
            let g = dfeat[c * batch + b] * inv;
            for v in &mut d_act[(c * batch + b) * area..][..area] {
                *v += g;
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy of one prediction, with `p` clamped to
/// `[1e-7, 1 - 1e-7]` before the logarithms.
pub fn bce_loss<T: Real>(p: T, y: u8) -> T {
    let lo = T::lit(PROB_CLAMP);
    let p = p.max(lo).min(T::one() - lo);
    let y = T::lit(y as f64);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

fn mean_bce<T: Real>(p: &[T], labels: &[u8]) -> T {
    let total: T = p.iter().zip(labels).map(|(&p, &y)| bce_loss(p, y)).sum();
    total / T::lit(p.len().max(1) as f64)
}
