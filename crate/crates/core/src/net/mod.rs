//! Dual-branch convolutional patch classifier.
//!
//! Each branch is a stack of 3×3 stride-2 convolutions with ReLU. From every
//! branch the head receives the global-average-pooled first-stage maps
//! (early tap) and the pooled last-stage maps (late tap). The concatenated
//! features pass through `FC -> 128 -> ReLU -> FC -> 1 -> sigmoid`.

mod io;
mod layers;
mod model;
mod train;

pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use model::{bce_loss, sigmoid, Branch, Conv, Dense, Grads, Head, Model, PROB_CLAMP};
pub use train::{
    accuracy_at_half, predict, split_indices, train, EpochStats, TrainConfig, TrainReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Width of the fused feature vector.
pub const FUSED_DIM: usize = 128;

/// Which map feeds a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Hf,
    Lf,
    Raw,
}

impl InputKind {
    pub fn index(self) -> usize {
        match self {
            InputKind::Hf => 0,
            InputKind::Lf => 1,
            InputKind::Raw => 2,
        }
    }
}

/// Input/branch layout. `FsBand` is the detector proper; the others are
/// the single-branch (SB) and dual-branch (DB) ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "SB-HFM")]
    SbHfm,
    #[serde(rename = "SB-LFM")]
    SbLfm,
    #[serde(rename = "SB-I")]
    SbI,
    #[serde(rename = "DB-HFM")]
    DbHfm,
    #[serde(rename = "DB-LFM")]
    DbLfm,
    #[serde(rename = "FS-BAND")]
    FsBand,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::SbHfm,
        Variant::SbLfm,
        Variant::SbI,
        Variant::DbHfm,
        Variant::DbLfm,
        Variant::FsBand,
    ];

    /// The map fed to each branch, in branch order.
    pub fn inputs(self) -> &'static [InputKind] {
        use InputKind::*;
        match self {
            Variant::SbHfm => &[Hf],
            Variant::SbLfm => &[Lf],
            Variant::SbI => &[Raw],
            Variant::DbHfm => &[Hf, Hf],
            Variant::DbLfm => &[Lf, Lf],
            Variant::FsBand => &[Hf, Lf],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::SbHfm => "SB-HFM",
            Variant::SbLfm => "SB-LFM",
            Variant::SbI => "SB-I",
            Variant::DbHfm => "DB-HFM",
            Variant::DbLfm => "DB-LFM",
            Variant::FsBand => "FS-BAND",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Output channels of each convolution stage.
    pub branch_channels: Vec<usize>,
    /// Leading first-stage channels pooled into the early feature.
    pub early_tap_channels: usize,
    /// Width of the first fully-connected layer; fixed at 128.
    pub fused_dim: usize,
    /// Side of the square input maps.
    pub input_side: usize,
    pub variant: Variant,
    /// Start the output unit at zero weight and bias, so a fresh model
    /// predicts exactly 0.5.
    pub zero_output_init: bool,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            branch_channels: vec![16, 32, 64, 128],
            early_tap_channels: 16,
            fused_dim: FUSED_DIM,
            input_side: crate::imgcore::DEFAULT_PATCH_SIDE,
            variant: Variant::FsBand,
            zero_output_init: true,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidConfig(m));
        if self.branch_channels.is_empty() || self.branch_channels.contains(&0) {
            return err(format!("branch channels {:?}", self.branch_channels));
        }
        if self.early_tap_channels == 0 || self.early_tap_channels > self.branch_channels[0] {
            return err(format!(
                "early tap of {} channels from a {}-channel first stage",
                self.early_tap_channels, self.branch_channels[0]
            ));
        }
        if self.fused_dim != FUSED_DIM {
            return err(format!("fused_dim must be {FUSED_DIM}"));
        }
        if self.input_side == 0 {
            return err("input side must be positive".into());
        }
        Ok(())
    }

    /// Feature width contributed by one branch.
    pub fn branch_features(&self) -> usize {
        self.early_tap_channels + self.branch_channels.last().copied().unwrap_or(0)
    }
}

/// One training/inference example: all three candidate inputs plus a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub side: usize,
    /// Indexed by [`InputKind::index`]: high-frequency map, low-frequency map, raw patch.
    pub maps: [Vec<T>; 3],
    pub label: u8,
}

impl<T: Real> Sample<T> {
    pub fn map(&self, kind: InputKind) -> &[T] {
        &self.maps[kind.index()]
    }

    /// Branch inputs for a variant, in branch order.
    pub fn inputs(&self, variant: Variant) -> Vec<&[T]> {
        variant.inputs().iter().map(|&k| self.map(k)).collect()
    }
}
