//! `fsband`: banding detection, training, corpus synthesis, evaluation and
//! benchmarking from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsband::net::Variant;
use fsband::synth::BackgroundKind;

use config::CliConfig;

#[derive(Debug, Parser)]
#[command(name = "fsband", version, about = "No-reference banding artifact detector")]
struct Cli {
    /// TOML config file (falls back to $FSBAND_CONFIG); flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for corpus generation, initialization and data shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Banding map and quality score for one image.
    Detect(DetectArgs),
    /// Train a classifier on a manifest.
    Train(TrainArgs),
    /// Generate a synthetic banding corpus.
    Synth(SynthArgs),
    /// Evaluate a trained model (and optional external scores) on a manifest.
    Eval(EvalArgs),
    /// Train and evaluate model variants on one split.
    Ablate(AblateArgs),
    /// Time the per-patch pipeline.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for the heatmap and JSON result.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub patch_side: Option<usize>,
    /// Percentage of non-zero banding values pooled per patch.
    #[arg(long)]
    pub pool_fraction: Option<f64>,
    /// Normalize the pooled sum globally instead of per patch.
    #[arg(long)]
    pub global_pool: bool,
    /// Compute the frequency maps on the whole image before tiling.
    #[arg(long)]
    pub image_scope: bool,
    /// Probability at which a patch counts as banded.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write the frequency maps and per-patch masking table.
    #[arg(long)]
    pub debug: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report (defaults to `<out>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for patches and manifest.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Patches per class.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub side: Option<usize>,
    /// Bit depths for banded patches, e.g. `3,4,5`.
    #[arg(long, value_delimiter = ',')]
    pub bits: Option<Vec<u8>>,
    /// Background kinds, e.g. `linear-gradient,texture`.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<BackgroundKind>>,
    /// Round smooth negatives to 8 bits without dithering.
    #[arg(long)]
    pub no_dither: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for eval.csv and eval.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Score only the held-out part of the training split.
    #[arg(long)]
    pub holdout: bool,
    /// External `id,score` CSV to evaluate alongside; repeatable.
    #[arg(long)]
    pub scores: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Variants to train (default: all six).
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    /// Directory for ablation.csv and ablation.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of manifest patches to time (at least 10).
    #[arg(long)]
    pub patches: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Write bench.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    let mut cfg = CliConfig::load(cli.config.as_deref()).map_err(commands::CliError::input)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| commands::CliError::input(e.to_string()))?;
    }
    match cli.command {
        Command::Detect(a) => commands::detect(cfg, &a),
        Command::Train(a) => commands::train(cfg, &a),
        Command::Synth(a) => commands::synth(cfg, &a),
        Command::Eval(a) => commands::eval(cfg, &a),
        Command::Ablate(a) => commands::ablate(cfg, &a),
        Command::Bench(a) => commands::bench(cfg, &a),
    }
}
