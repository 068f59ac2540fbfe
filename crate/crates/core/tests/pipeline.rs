use fsband::dataset::build_samples;
use fsband::eval::{benchmark_speed, benchmark_speed_report, run_ablation_on, AblationConfig};
use fsband::freqmaps::{hfm, sobel_magnitude, LfmConfig, SOBEL_X, SOBEL_Y};
use fsband::imgcore::{reflect_index, Image, Patch};
use fsband::metric::{detect, DetectConfig};
use fsband::net::{load_model, save_model, train, NetConfig, TrainConfig, Variant};
use fsband::synth::{self, SynthConfig};
use fsband::{Error, Image32, Model32, Patch32};

fn small_corpus(seed: u64) -> (Vec<Patch32>, Vec<fsband::net::Sample<f32>>) {
    let cfg = SynthConfig {
        count_per_class: 60,
        side: 16,
        seed,
        ..SynthConfig::default()
    };
    let (recs, patches): (Vec<_>, Vec<Patch32>) = synth::gen_patches(&cfg).unwrap().into_iter().unzip();
    let labels: Vec<u8> = recs.iter().map(|r| r.label).collect();
    let samples = build_samples(&patches, &labels, &LfmConfig::default()).unwrap();
    (patches, samples)
}

fn small_net(variant: Variant) -> NetConfig {
    NetConfig {
        branch_channels: vec![4, 8],
        early_tap_channels: 4,
        input_side: 16,
        variant,
        ..NetConfig::default()
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn sobel_matches_explicit_kernel_correlation() {
    let n = 9;
    let data: Vec<f64> = (0..n * n).map(|i| ((i * 37 + 11) % 17) as f64 / 16.0).collect();
    let fast = sobel_magnitude(&data, n, n);
    for r in 0..n {
        for c in 0..n {
            let (mut gx, mut gy) = (0.0, 0.0);
            for (dr, krow) in (-1isize..=1).zip(0..3) {
                for (dc, kcol) in (-1isize..=1).zip(0..3) {
                    let rr = reflect_index(r as isize + dr, n);
                    let cc = reflect_index(c as isize + dc, n);
                    let v = data[rr * n + cc];
                    gx += SOBEL_X[krow][kcol] * v;
                    gy += SOBEL_Y[krow][kcol] * v;
                }
            }
            assert!((fast[r * n + c] - gx.hypot(gy)).abs() < 1e-12, "({r},{c})");
        }
    }
}

#[test]
fn constant_image_scores_zero() {
    let model = Model32::init(&small_net(Variant::FsBand)).unwrap();
    let img: Image32 = Image::filled(40, 24, 0.5).unwrap();
    let cfg = DetectConfig {
        patch_side: 16,
        ..DetectConfig::default()
    };
    let det = detect(&img, &model, &cfg).unwrap();
    assert_eq!(det.quality.q, 0.0);
    assert!(det.quality.q.is_sign_positive());
    assert_eq!((det.map.width(), det.map.height()), (40, 24));
    assert!(det.map.data().iter().all(|&v| v == 0.0));
}

#[test]
fn detect_rejects_side_mismatch() {
    let model = Model32::init(&small_net(Variant::FsBand)).unwrap();
    let img: Image32 = Image::filled(64, 64, 0.5).unwrap();
    assert!(matches!(
        detect(&img, &model, &DetectConfig::default()),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn trained_model_separates_and_survives_round_trip() {
    let (_, samples) = small_corpus(1);
    let (model, report) = train(Model32::init(&small_net(Variant::FsBand)).unwrap(), &samples, &quick_train()).unwrap();
    assert!((report.initial_loss - std::f64::consts::LN_2).abs() < 1e-4);
    assert!(report.epochs.last().unwrap().mean_loss < report.initial_loss);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.fsbd");
    save_model(&model, &path).unwrap();
    let back: Model32 = load_model(&path).unwrap();
    let inputs: Vec<Vec<&[f32]>> = samples.iter().take(10).map(|s| s.inputs(Variant::FsBand)).collect();
    assert_eq!(model.predict_batch(&inputs).unwrap(), back.predict_batch(&inputs).unwrap());

    // the two branches are not interchangeable once trained
    let swapped: Vec<Vec<&[f32]>> = inputs.iter().map(|v| vec![v[1], v[0]]).collect();
    let a = model.predict_batch(&inputs).unwrap();
    let b = model.predict_batch(&swapped).unwrap();
    let differ = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    assert!(differ >= 9, "{differ}/10 outputs changed");
}

#[test]
fn ablation_is_deterministic_and_one_row_per_variant() {
    let (patches, samples) = small_corpus(2);
    let cfg = AblationConfig {
        net: small_net(Variant::FsBand),
        train: TrainConfig {
            epochs: 1,
            ..quick_train()
        },
        bench_patches: 10,
        ..AblationConfig::default()
    };
    let one = run_ablation_on(&samples, &patches, &[Variant::FsBand], &cfg).unwrap();
    assert_eq!(one.len(), 1);
    assert!(one[0].report.seconds_per_patch.unwrap() > 0.0);

    let cfg = AblationConfig { bench_patches: 0, ..cfg };
    let a = run_ablation_on(&samples, &patches, &Variant::ALL, &cfg).unwrap();
    let b = run_ablation_on(&samples, &patches, &Variant::ALL, &AblationConfig { parallel: true, ..cfg.clone() }).unwrap();
    assert_eq!(a, b);
    let names: Vec<&str> = a.iter().map(|r| r.report.name.as_str()).collect();
    assert_eq!(names, ["SB-HFM", "SB-LFM", "SB-I", "DB-HFM", "DB-LFM", "FS-BAND"]);
    for r in &a {
        assert_eq!(r.train.holdout_size, 24);
    }
}

#[test]
fn benchmark_preconditions_and_sanity() {
    let (patches, _) = small_corpus(3);
    let model = Model32::init(&small_net(Variant::FsBand)).unwrap();
    let cfg = LfmConfig::default();
    assert!(benchmark_speed(&model, &patches[..9], 3, &cfg).is_err());
    assert!(benchmark_speed(&model, &patches[..10], 2, &cfg).is_err());
    let r = benchmark_speed_report(&model, &patches[..20], 5, &cfg).unwrap();
    assert!(r.seconds_per_patch.is_finite() && r.seconds_per_patch > 0.0);
    assert_eq!(r.per_rep.len(), 5);
    assert!(r.cv() < 0.5, "cv {}", r.cv());
}

#[test]
fn hfm_of_banded_ramp_lives_on_contours() {
    let ramp: Vec<f64> = (0..64 * 64).map(|i| (i % 64) as f64 / 63.0).collect();
    let banded = synth::apply_banding(&Patch::new(64, (0, 0), ramp).unwrap(), 3);
    let h = hfm(&banded);
    let active = h.data.iter().filter(|&&v| v > 0.0).count();
    // 7 contours, each two columns wide
    assert_eq!(active, 7 * 2 * 64);
}
