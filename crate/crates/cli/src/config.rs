use std::path::{Path, PathBuf};

use fsband::eval::AblationConfig;
use fsband::freqmaps::{LfmConfig, MapScope};
use fsband::imgcore::PadPolicy;
use fsband::metric::{DetectConfig, PoolNormalization};
use fsband::net::{NetConfig, TrainConfig};
use fsband::synth::SynthConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "FSBAND_CONFIG";

/// Detection settings; the patch side defaults to the model's input side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub patch_side: Option<usize>,
    pub pad_policy: PadPolicy,
    pub gamma: f64,
    pub pool_fraction: f64,
    pub normalization: PoolNormalization,
    pub threshold: f64,
    pub map_scope: MapScope,
}

impl Default for DetectSection {
    fn default() -> Self {
        let d = DetectConfig::default();
        Self {
            patch_side: None,
            pad_policy: d.pad_policy,
            gamma: d.gamma,
            pool_fraction: d.pool_fraction,
            normalization: d.normalization,
            threshold: d.threshold,
            map_scope: d.map_scope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Patches timed by eval/ablate/bench; 0 disables timing in eval and ablate.
    pub bench_patches: usize,
    pub bench_reps: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            bench_patches: 20,
            bench_reps: 3,
        }
    }
}

/// Contents of the TOML config file. Every section is optional; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub lfm: LfmConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub detect: DetectSection,
    pub eval: EvalSection,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads `explicit`, else the file named by `FSBAND_CONFIG`, else defaults.
    pub fn load(explicit: Option<&Path>) -> Result<Self, String> {
        let path: Option<PathBuf> = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| format!("config {}: {e}", p.display()))?;
                Self::parse(&text).map_err(|e| format!("config {}: {e}", p.display()))
            }
        }
    }

    /// Applies the global `--seed` to every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.net.seed = seed;
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    pub fn detect_config(&self, model_side: usize) -> DetectConfig {
        let d = &self.detect;
        DetectConfig {
            patch_side: d.patch_side.unwrap_or(model_side),
            pad_policy: d.pad_policy,
            lfm: self.lfm,
            gamma: d.gamma,
            pool_fraction: d.pool_fraction,
            normalization: d.normalization,
            threshold: d.threshold,
            map_scope: d.map_scope,
        }
    }

    pub fn ablation_config(&self) -> AblationConfig {
        AblationConfig {
            net: self.net.clone(),
            train: self.train.clone(),
            lfm: self.lfm,
            bench_patches: self.eval.bench_patches,
            bench_reps: self.eval.bench_reps,
            parallel: false,
        }
    }
}
