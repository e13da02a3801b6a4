use std::path::{Path, PathBuf};

use nriqa::distort::{procedural_reference, DistortionKind, DistortionSpec};
use nriqa::features::{extract_batch, extract_features, FeatureConfig, FEATURE_COUNT, FEATURE_NAMES};
use nriqa::net::{train_scg, Network, Topology, TrainConfig, DEFAULT_PARAM_COUNT};
use nriqa::par::Jobs;
use nriqa::raster::{load_grayscale, save_pgm, GrayPlane};
use nriqa::NetworkModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const GOLDEN_IMAGE: &str = "ref_noise512.pgm";
const GOLDEN_VECTOR: &str = "ref_noise512.features";

fn golden_plane() -> GrayPlane {
    let smooth = procedural_reference(512, 512, 2024);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 4.0 / 255.0).unwrap();
    GrayPlane::new(
        512,
        512,
        smooth.data().iter().map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect(),
    )
    .unwrap()
}

/// Rewrites the committed fixture and its feature vector. Run explicitly with
/// `cargo test -p nriqa-core --test pipeline -- --ignored` after an intended
/// change to the feature definitions.
#[test]
#[ignore]
fn regenerate_golden_fixture() {
    std::fs::create_dir_all(fixture("")).unwrap();
    save_pgm(&golden_plane(), fixture(GOLDEN_IMAGE)).unwrap();
    let plane = load_grayscale(fixture(GOLDEN_IMAGE)).unwrap();
    let v = extract_features(&plane, &FeatureConfig::default()).unwrap();
    let text: String = FEATURE_NAMES
        .iter()
        .zip(v.values())
        .map(|(n, x)| format!("{n} {x:?}\n"))
        .collect();
    std::fs::write(fixture(GOLDEN_VECTOR), text).unwrap();
}

#[test]
fn golden_feature_vector_is_reproduced() {
    let plane = load_grayscale(fixture(GOLDEN_IMAGE)).unwrap();
    assert_eq!(plane.dims(), (512, 512));
    let got = extract_features(&plane, &FeatureConfig::default()).unwrap();
    let text = std::fs::read_to_string(fixture(GOLDEN_VECTOR)).unwrap();
    let want: Vec<(String, f64)> = text
        .lines()
        .map(|l| {
            let (n, v) = l.split_once(' ').unwrap();
            (n.to_string(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(want.len(), FEATURE_COUNT);
    for (i, ((name, w), g)) in want.iter().zip(got.values()).enumerate() {
        assert_eq!(name, FEATURE_NAMES[i]);
        assert!((g - w).abs() <= 1e-9, "{name}: {g} vs golden {w}");
    }
}

#[test]
fn structural_constants() {
    assert_eq!(FEATURE_COUNT, 27);
    let expected = [
        "gm_var_s0", "ro_var_s0", "rm_var_s0", "gm_var_s1", "ro_var_s1", "rm_var_s1", "gm_var_s2", "ro_var_s2",
        "rm_var_s2", "ggd_alpha", "ggd_beta", "h_shape", "h_mean", "h_beta_left", "h_beta_right", "v_shape",
        "v_mean", "v_beta_left", "v_beta_right", "d1_shape", "d1_mean", "d1_beta_left", "d1_beta_right",
        "d2_shape", "d2_mean", "d2_beta_left", "d2_beta_right",
    ];
    assert_eq!(FEATURE_NAMES, expected);
    assert_eq!(DEFAULT_PARAM_COUNT, 871);
    assert_eq!(Topology::default().param_count(), 871);
    assert_eq!(Network::init(Topology::default(), 1).params().len(), 871);
}

#[test]
fn gradient_magnitude_variance_is_rotation_invariant() {
    let plane = procedural_reference(128, 96, 5);
    let a = extract_features(&plane, &FeatureConfig::default()).unwrap();
    let b = extract_features(&plane.rotate90(), &FeatureConfig::default()).unwrap();
    for i in [0, 3, 6] {
        assert!((a.values()[i] - b.values()[i]).abs() <= 1e-6, "feature {i}");
    }
}

#[test]
fn extraction_is_bit_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..6)
        .map(|k| {
            let p = dir.path().join(format!("{k}.pgm"));
            save_pgm(&procedural_reference(80 + 8 * k, 96, k as u64), &p).unwrap();
            p
        })
        .collect();
    let seq = extract_batch(&paths, &FeatureConfig::default(), Jobs::SEQUENTIAL);
    let par = extract_batch(&paths, &FeatureConfig::default(), Jobs(4));
    for (a, b) in seq.iter().zip(&par) {
        let (a, b) = (a.as_ref().unwrap().values(), b.as_ref().unwrap().values());
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

fn linear_task(n: usize, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..27).map(|_| rng.random_range(-0.2..0.2)).collect();
    let noise = Normal::new(0.0, noise).unwrap();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..27).map(|_| StandardNormal.sample(&mut rng)).collect();
        targets.push(x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng));
        rows.push(x);
    }
    (rows, targets)
}

fn nonlinear_task(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..27).map(|k| rng.random_range(-1.0..1.0) * (k + 1) as f64).collect();
        targets.push(40.0 * (x[0]).sin() + 3.0 * x[5] * x[9] / 60.0 + 50.0);
        rows.push(x);
    }
    (rows, targets)
}

fn validation_mse(model: &NetworkModel, rows: &[Vec<f64>], targets: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| (model.forward(&rows[i]).unwrap() - targets[i]).powi(2)).sum::<f64>() / idx.len() as f64
}

#[test]
fn learns_a_linear_task() {
    let (rows, targets) = linear_task(500, 0.01, 1);
    let (model, history) = train_scg(&rows, &targets, &TrainConfig::default()).unwrap();
    let best = history.best().unwrap();
    assert!(best.validation_mse < 1e-3, "best validation mse {}", best.validation_mse);
    let recomputed = validation_mse(&model, &rows, &targets, &history.split.validation);
    assert!((recomputed - best.validation_mse).abs() <= 1e-9 * best.validation_mse.max(1e-12));
}

#[test]
fn returned_model_never_worse_than_first_epoch() {
    let fixtures = [linear_task(200, 0.05, 2), linear_task(60, 0.5, 3), nonlinear_task(300, 4), nonlinear_task(40, 5)];
    for (k, (rows, targets)) in fixtures.iter().enumerate() {
        for seed in 0..3 {
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let (model, history) = train_scg(rows, targets, &cfg).unwrap();
            let first = history.epochs[0].validation_mse;
            let best = history.best().unwrap().validation_mse;
            assert!(best <= first, "fixture {k} seed {seed}: {best} > {first}");
            let recomputed = validation_mse(&model, rows, targets, &history.split.validation);
            assert!(recomputed <= first * (1.0 + 1e-12), "fixture {k} seed {seed}");
        }
    }
}

#[test]
fn training_is_deterministic_under_parallel_jobs() {
    let (rows, targets) = nonlinear_task(300, 6);
    let cfg = TrainConfig {
        seed: 9,
        max_epochs: 40,
        ..TrainConfig::default()
    };
    let (a, ha) = train_scg(&rows, &targets, &TrainConfig { jobs: Jobs::SEQUENTIAL, ..cfg.clone() }).unwrap();
    let (b, hb) = train_scg(&rows, &targets, &TrainConfig { jobs: Jobs(4), ..cfg }).unwrap();
    assert_eq!(ha, hb);
    let bits = |m: &NetworkModel| m.network.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn full_reference_error_grows_along_each_ladder() {
    let ladders = [
        (DistortionKind::Gblur, vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0]),
        (DistortionKind::Wn, vec![1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0]),
        (DistortionKind::JpegBlock, vec![5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0]),
    ];
    let mut sources: Vec<GrayPlane> = (0..4).map(|s| procedural_reference(96, 128, s)).collect();
    sources.push(load_grayscale(fixture(GOLDEN_IMAGE)).unwrap());
    sources.push(GrayPlane::filled(64, 64, 0.5));
    for (si, src) in sources.iter().enumerate() {
        for (kind, levels) in &ladders {
            let mut prev = 0.0;
            for &level in levels {
                let out = DistortionSpec::new(*kind, level, 17).unwrap().apply(src).unwrap();
                let e = nriqa::distort::mse(src, &out).unwrap();
                assert!(e >= prev, "source {si} {kind} level {level}: {e} < {prev}");
                prev = e;
            }
        }
    }
}
