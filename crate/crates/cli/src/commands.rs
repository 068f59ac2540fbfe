use std::path::{Path, PathBuf};

use fsband::dataset::load_samples;
use fsband::eval::{
    benchmark_speed_report, evaluate, format_table, join_scores, read_scores_csv, run_ablation_on, write_reports_csv,
    write_reports_json, EvalReport, MIN_BENCH_PATCHES,
};
use fsband::freqmaps::MapScope;
use fsband::imgcore::{load_image, normalize_to_u8, save_gray8, tile_patches};
use fsband::metric::{detect as run_detect, grid_maps, DetectionReport, PoolNormalization};
use fsband::net::{load_model, save_model, split_indices, train as run_train, Sample, TrainReport, Variant};
use fsband::synth::{gen_dataset, DatasetManifest, MANIFEST_FILE};
use fsband::{Error, Image32, Model32, Patch32};
use serde::Serialize;

use crate::config::CliConfig;
use crate::{AblateArgs, BenchArgs, DetectArgs, EvalArgs, SynthArgs, TrainArgs};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_MODEL: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DegenerateDataset(_) | Error::SingleClass(_) => EXIT_DEGENERATE,
            Error::VersionMismatch { .. } | Error::ChecksumMismatch | Error::BadModelFile(_) => EXIT_MODEL,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), CliError>;

/// Any failure to obtain a model counts as a model-format error.
fn open_model(path: &Path) -> Result<Model32, CliError> {
    load_model(path).map_err(|e| CliError {
        code: EXIT_MODEL,
        message: format!("cannot load model {}: {e}", path.display()),
    })
}

fn ensure_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::input(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CmdResult {
    let err = |e: csv::Error| CliError::input(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::input(e.to_string()))
}

fn read_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    // a directory means the manifest.jsonl inside it
    let path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    Ok(DatasetManifest::read(path)?)
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    image: String,
    width: usize,
    height: usize,
    variant: Variant,
    patch_side: usize,
    #[serde(flatten)]
    report: &'a DetectionReport,
}

#[derive(Serialize)]
struct MaskingRow {
    k: usize,
    row: usize,
    col: usize,
    probability: f64,
    label: u8,
    cf: f64,
    rf: f64,
    sf: f64,
    w: f64,
}

#[derive(Serialize)]
struct MapSidecar {
    hfm_png: String,
    hfm_min: f64,
    hfm_max: f64,
    lfm_png: String,
    lfm_min: f64,
    lfm_max: f64,
    eps: f64,
}

pub fn detect(cfg: CliConfig, a: &DetectArgs) -> CmdResult {
    let model = open_model(&a.model)?;
    let img: Image32 = load_image(&a.image)?;
    let mut dcfg = cfg.detect_config(model.config().input_side);
    if let Some(s) = a.patch_side {
        dcfg.patch_side = s;
    }
    if let Some(p) = a.pool_fraction {
        dcfg.pool_fraction = p;
    }
    if a.global_pool {
        dcfg.normalization = PoolNormalization::Global;
    }
    if a.image_scope {
        dcfg.map_scope = MapScope::Image;
    }
    if let Some(t) = a.threshold {
        dcfg.threshold = t;
    }
    let det = run_detect(&img, &model, &dcfg)?;

    ensure_dir(&a.out)?;
    let stem = a
        .image
        .file_stem()
        .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned());
    let heatmap = a.out.join(format!("{stem}.heatmap.png"));
    det.save_heatmap(&heatmap)?;
    let report = det.report();
    let output = DetectOutput {
        image: a
            .image
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        width: img.width(),
        height: img.height(),
        variant: model.config().variant,
        patch_side: dcfg.patch_side,
        report: &report,
    };
    let json = a.out.join(format!("{stem}.json"));
    write_json(&json, &output)?;

    if a.debug {
        let grid = tile_patches(&img, dcfg.patch_side, dcfg.pad_policy)?;
        let maps = grid_maps(&img, &grid, &dcfg.lfm, dcfg.map_scope)?;
        let geo = grid.geometry();
        let hf: Vec<&[f32]> = maps.iter().map(|(h, _)| h.data.as_slice()).collect();
        let lf: Vec<&[f32]> = maps.iter().map(|(_, l)| l.data.as_slice()).collect();
        let (hf_codes, hfm_min, hfm_max) = normalize_to_u8(&geo.stitch(&hf));
        let (lf_codes, lfm_min, lfm_max) = normalize_to_u8(&geo.stitch(&lf));
        let hfm_png = format!("{stem}.hfm.png");
        let lfm_png = format!("{stem}.lfm.png");
        save_gray8(a.out.join(&hfm_png), geo.width, geo.height, &hf_codes)?;
        save_gray8(a.out.join(&lfm_png), geo.width, geo.height, &lf_codes)?;
        write_json(
            &a.out.join(format!("{stem}.maps.json")),
            &MapSidecar {
                hfm_png,
                hfm_min,
                hfm_max,
                lfm_png,
                lfm_min,
                lfm_max,
                eps: det.eps as f64,
            },
        )?;
        let rows: Vec<MaskingRow> = (0..det.labels.len())
            .map(|k| MaskingRow {
                k,
                row: k / geo.cols,
                col: k % geo.cols,
                probability: det.probabilities[k] as f64,
                label: det.labels[k],
                cf: det.stats[k].cf as f64,
                rf: det.stats[k].rf as f64,
                sf: det.stats[k].sf as f64,
                w: det.weights[k] as f64,
            })
            .collect();
        write_csv(&a.out.join(format!("{stem}.masking.csv")), &rows)?;
    }

    println!("Q = {}", report.q);
    eprintln!("heatmap: {}", heatmap.display());
    eprintln!("result:  {}", json.display());
    Ok(())
}

fn default_report_path(model: &Path) -> PathBuf {
    let mut name = model.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    model.with_file_name(name)
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    model: String,
    variant: Variant,
    seed: u64,
    #[serde(flatten)]
    report: &'a TrainReport,
}

pub fn train(mut cfg: CliConfig, a: &TrainArgs) -> CmdResult {
    if let Some(v) = a.variant {
        cfg.net.variant = v;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    let manifest = read_manifest(&a.manifest)?;
    let (_, samples) = load_samples::<f32>(&manifest, &cfg.lfm)?;
    if let Some(s) = samples.first() {
        cfg.net.input_side = s.side;
    }
    if let Some(bad) = samples.iter().find(|s| s.side != cfg.net.input_side) {
        return Err(CliError::input(format!(
            "manifest mixes patch sides {} and {}",
            cfg.net.input_side, bad.side
        )));
    }
    let model = Model32::init(&cfg.net)?;
    let (model, report) = run_train(model, &samples, &cfg.train)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_model(&model, &a.out)?;
    let report_path = a.report.clone().unwrap_or_else(|| default_report_path(&a.out));
    write_json(
        &report_path,
        &TrainOutput {
            model: a.out.display().to_string(),
            variant: cfg.net.variant,
            seed: cfg.train.seed,
            report: &report,
        },
    )?;
    println!(
        "{} trained on {} patches: initial loss {:.4}, final held-out accuracy {:.4} ({} patches)",
        cfg.net.variant, report.train_size, report.initial_loss, report.final_holdout_accuracy, report.holdout_size
    );
    eprintln!("model:  {}", a.out.display());
    eprintln!("report: {}", report_path.display());
    Ok(())
}

pub fn synth(mut cfg: CliConfig, a: &SynthArgs) -> CmdResult {
    let s = &mut cfg.synth;
    if let Some(c) = a.count {
        s.count_per_class = c;
    }
    if let Some(side) = a.side {
        s.side = side;
    }
    if let Some(b) = &a.bits {
        s.bit_depths = b.clone();
    }
    if let Some(k) = &a.kinds {
        s.kinds = k.clone();
    }
    if a.no_dither {
        s.dither = false;
    }
    let manifest = gen_dataset(&cfg.synth, &a.out)?;
    println!(
        "{} patches ({} banded, {} clean) of side {} in {}",
        manifest.len(),
        manifest.count_label(1),
        manifest.count_label(0),
        cfg.synth.side,
        a.out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

fn print_and_write(out: &Path, stem: &str, reports: &[EvalReport]) -> CmdResult {
    ensure_dir(out)?;
    write_reports_csv(out.join(format!("{stem}.csv")), reports)?;
    write_reports_json(out.join(format!("{stem}.json")), reports)?;
    print!("{}", format_table(reports));
    Ok(())
}

fn bench_subset<'a>(cfg: &CliConfig, patches: &'a [Patch32]) -> Option<&'a [Patch32]> {
    let n = cfg.eval.bench_patches.min(patches.len());
    (n >= MIN_BENCH_PATCHES).then(|| &patches[..n])
}

pub fn eval(cfg: CliConfig, a: &EvalArgs) -> CmdResult {
    let model = open_model(&a.model)?;
    let manifest = read_manifest(&a.manifest)?;
    let (patches, samples) = load_samples::<f32>(&manifest, &cfg.lfm)?;
    let chosen: Vec<usize> = if a.holdout {
        split_indices(samples.len(), cfg.train.split_ratio, cfg.train.seed).1
    } else {
        (0..samples.len()).collect()
    };
    let subset: Vec<&Sample<f32>> = chosen.iter().map(|&i| &samples[i]).collect();
    let mut report = evaluate(model.config().variant.name(), &model, &subset)?;
    if cfg.eval.bench_patches > 0 {
        let chosen_patches: Vec<Patch32> = chosen.iter().map(|&i| patches[i].clone()).collect();
        if let Some(bp) = bench_subset(&cfg, &chosen_patches) {
            report.seconds_per_patch =
                Some(benchmark_speed_report(&model, bp, cfg.eval.bench_reps, &cfg.lfm)?.seconds_per_patch);
        }
    }
    let mut reports = vec![report];
    for path in &a.scores {
        let scores = read_scores_csv(path)?;
        let set = join_scores(&manifest, &scores)?;
        let name = path
            .file_stem()
            .map_or_else(|| "external".into(), |s| s.to_string_lossy().into_owned());
        reports.push(EvalReport::from_scores(name, &set)?);
    }
    print_and_write(&a.out, "eval", &reports)
}

pub fn ablate(mut cfg: CliConfig, a: &AblateArgs) -> CmdResult {
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let variants = a.variants.clone().unwrap_or_else(|| Variant::ALL.to_vec());
    let manifest = read_manifest(&a.manifest)?;
    let (patches, samples) = load_samples::<f32>(&manifest, &cfg.lfm)?;
    let mut acfg = cfg.ablation_config();
    if let Some(s) = samples.first() {
        acfg.net.input_side = s.side;
    }
    if bench_subset(&cfg, &patches).is_none() {
        acfg.bench_patches = 0;
    }
    let rows = run_ablation_on(&samples, &patches, &variants, &acfg)?;
    let reports: Vec<EvalReport> = rows.iter().map(|r| r.report.clone()).collect();
    print_and_write(&a.out, "ablation", &reports)
}

#[derive(Serialize)]
struct BenchOutput {
    variant: Variant,
    patches: usize,
    repetitions: usize,
    seconds_per_patch: f64,
    per_rep: Vec<f64>,
}

pub fn bench(cfg: CliConfig, a: &BenchArgs) -> CmdResult {
    let model = open_model(&a.model)?;
    let manifest = read_manifest(&a.manifest)?;
    let patches: Vec<Patch32> = manifest.load_patches()?;
    let n = a.patches.unwrap_or(cfg.eval.bench_patches).min(patches.len());
    let reps = a.reps.unwrap_or(cfg.eval.bench_reps);
    let r = benchmark_speed_report(&model, &patches[..n], reps, &cfg.lfm)?;
    println!(
        "{}: {:.6} s/patch (median of {} reps over {} patches, cv {:.3})",
        model.config().variant,
        r.seconds_per_patch,
        reps,
        n,
        r.cv()
    );
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_json(
            &out.join("bench.json"),
            &BenchOutput {
                variant: model.config().variant,
                patches: n,
                repetitions: reps,
                seconds_per_patch: r.seconds_per_patch,
                per_rep: r.per_rep,
            },
        )?;
    }
    Ok(())
}
