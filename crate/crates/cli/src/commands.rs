use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nriqa::distort::{generate_dataset, procedural_reference, LadderConfig};
use nriqa::eval::{evaluate_with_held_out, ingest_live_r2, DatasetManifest, DistortionClass, EvaluationReport};
use nriqa::features::{extract_batch, read_feature_csv, write_feature_csv, FeatureRow};
use nriqa::net::{train_scg_grouped, ModelMeta, NetworkModel, SplitMode, TrainConfig, TrainHistory};
use nriqa::par::Jobs;
use nriqa::raster::{load_grayscale, save_pgm};
use nriqa::seed::derive_seed;
use nriqa::{extract_features, Error, FeatureConfig};
use serde::Deserialize;

use crate::args::{BenchArgs, EvaluateArgs, ExtractArgs, IngestLiveArgs, PredictArgs, SplitArg, SynthArgs, TrainArgs};
use crate::svg;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// Runtime or data error: exit 1.
    Run(Error),
    /// Some items failed after the rest were processed: exit 1.
    Partial(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Run(Error::Config(_)) => 2,
            Failure::Run(_) | Failure::Partial(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Partial(m) => f.write_str(m),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

pub type Outcome = std::result::Result<(), Failure>;

/// Contents of the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub features: FeatureConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> std::result::Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

pub struct Context {
    pub seed: u64,
    pub verbose: bool,
    pub config: FileConfig,
}

impl Context {
    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    std::fs::write(path, bytes).map_err(|e| Failure::Run(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}

fn report_failures(failures: &[(String, String)], what: &str) -> Outcome {
    if failures.is_empty() {
        return Ok(());
    }
    for (path, msg) in failures {
        if msg.contains(path.as_str()) {
            eprintln!("error: {msg}");
        } else {
            eprintln!("error: {path}: {msg}");
        }
    }
    Err(Failure::Partial(format!("{} of the {what} failed", failures.len())))
}

struct Inputs {
    labels: Vec<String>,
    paths: Vec<PathBuf>,
    targets: Vec<Option<f64>>,
    groups: Vec<Option<String>>,
}

fn manifest_inputs(m: &DatasetManifest) -> Inputs {
    Inputs {
        labels: m.records().iter().map(|r| r.path.clone()).collect(),
        paths: m.resolved_paths(),
        targets: m.records().iter().map(|r| Some(r.target)).collect(),
        groups: m.records().iter().map(|r| r.reference_id.clone()).collect(),
    }
}

/// Extracts features for `inputs`; failures are listed and turn into an
/// error. With `fail_fast` processing stops at the first failure.
fn extract_rows(ctx: &Context, inputs: &Inputs, cfg: &FeatureConfig, jobs: Jobs, fail_fast: bool) -> std::result::Result<Vec<FeatureRow>, Failure> {
    let started = Instant::now();
    let results = if fail_fast {
        let mut out = Vec::new();
        for p in &inputs.paths {
            let r = nriqa::features::extract_file(p, cfg);
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        out
    } else {
        extract_batch(&inputs.paths, cfg, jobs)
    };
    ctx.note(format!("extracted {} images in {:.2?}", results.len(), started.elapsed()));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(features) => rows.push(FeatureRow {
                path: inputs.labels[i].clone(),
                features,
                target: inputs.targets[i],
            }),
            Err(e) => failures.push((inputs.paths[i].display().to_string(), e.to_string())),
        }
    }
    report_failures(&failures, "images")?;
    Ok(rows)
}

pub fn extract(ctx: &Context, a: &ExtractArgs) -> Outcome {
    let inputs = match &a.manifest {
        Some(m) => manifest_inputs(&DatasetManifest::read(m)?),
        None => Inputs {
            labels: a.images.iter().map(|p| p.display().to_string()).collect(),
            paths: a.images.clone(),
            targets: vec![None; a.images.len()],
            groups: vec![None; a.images.len()],
        },
    };
    let rows = extract_rows(ctx, &inputs, &ctx.config.features, Jobs(a.jobs.jobs), a.fail_fast)?;
    write_feature_csv(&a.out, &rows)?;
    ctx.note(format!("wrote {} rows to {}", rows.len(), a.out.display()));
    Ok(())
}

fn train_config(ctx: &Context, a: &TrainArgs) -> TrainConfig {
    let mut cfg = ctx.config.train.clone();
    cfg.seed = ctx.seed;
    cfg.jobs = Jobs(a.jobs.jobs);
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.max_validation_failures {
        cfg.max_validation_failures = v;
    }
    if let Some(v) = a.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = a.train_fraction {
        cfg.train_fraction = v;
    }
    if let Some(v) = a.validation_fraction {
        cfg.validation_fraction = v;
    }
    if let Some(v) = a.test_fraction {
        cfg.test_fraction = v;
    }
    if let Some(s) = a.split {
        cfg.split = match s {
            SplitArg::Random => SplitMode::Random,
            SplitArg::ContentDisjoint => SplitMode::ContentDisjoint,
        };
    }
    cfg
}

pub fn history_path(model: &Path) -> PathBuf {
    model.with_extension("history.csv")
}

pub fn history_csv(h: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_mse,validation_mse,test_mse,grad_norm\n");
    for e in &h.epochs {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            e.epoch, e.train_mse, e.validation_mse, e.test_mse, e.grad_norm
        );
    }
    out
}

fn write_history(model: &Path, h: &TrainHistory, plot: bool) -> Outcome {
    write_file(&history_path(model), history_csv(h))?;
    if plot {
        let series = |name, f: fn(&nriqa::net::EpochRecord) -> f64| svg::Series {
            name,
            points: h.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect(),
        };
        let chart = svg::line_chart(
            "Mean squared error per epoch",
            "epoch",
            "MSE",
            &[
                series("train", |e| e.train_mse),
                series("validation", |e| e.validation_mse),
                series("test", |e| e.test_mse),
            ],
            true,
        );
        write_file(&model.with_extension("history.svg"), chart)?;
    }
    Ok(())
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Outcome {
    let cfg = train_config(ctx, a);
    cfg.validate()?;
    let feature_cfg = ctx.config.features;
    let (rows, groups) = match (&a.features, &a.manifest) {
        (Some(f), _) => (read_feature_csv(f)?, None),
        (None, Some(m)) => {
            let inputs = manifest_inputs(&DatasetManifest::read(m)?);
            let rows = extract_rows(ctx, &inputs, &feature_cfg, cfg.jobs, false)?;
            (rows, Some(inputs.groups))
        }
        (None, None) => return Err(Failure::Usage("one of --features or --manifest is required".into())),
    };
    let targets = rows
        .iter()
        .map(|r| r.target.ok_or_else(|| Error::Dataset(format!("row `{}` has no target", r.path))))
        .collect::<nriqa::Result<Vec<f64>>>()?;
    let groups: Option<Vec<String>> = match (cfg.split, groups) {
        (SplitMode::ContentDisjoint, Some(g)) => Some(
            g.into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Failure::Usage("content-disjoint split needs a reference_id on every manifest row".into()))?,
        ),
        (SplitMode::ContentDisjoint, None) => {
            return Err(Failure::Usage("content-disjoint split needs --manifest with reference ids".into()))
        }
        (SplitMode::Random, _) => None,
    };
    let features: Vec<&[f64]> = rows.iter().map(|r| r.features.values().as_slice()).collect();

    let started = Instant::now();
    let (mut model, history) = match train_scg_grouped(&features, &targets, groups.as_deref(), &cfg) {
        Ok(v) => v,
        Err(Error::Divergence { epoch, history }) => {
            write_history(&a.out, &history, a.plot)?;
            return Err(Failure::Run(Error::Divergence { epoch, history }));
        }
        Err(e) => return Err(e.into()),
    };
    ctx.note(format!("trained {} epochs in {:.2?}", history.epochs.len(), started.elapsed()));
    model.meta = ModelMeta {
        gradient: feature_cfg.gradient,
        train: Some(cfg),
        target_convention: a.target_convention.clone(),
        held_out: history.split.test.iter().map(|&i| rows[i].path.clone()).collect(),
        ..ModelMeta::default()
    };
    model.save(&a.out)?;
    write_history(&a.out, &history, a.plot)?;
    let best = history.best().expect("at least one epoch");
    println!("best epoch: {}", history.best_epoch);
    println!("best validation MSE: {:.6e}", best.validation_mse);
    println!("test MSE at best epoch: {:.6e}", best.test_mse);
    println!(
        "stop reason: {}",
        history.stop_reason.map(|s| s.to_string()).unwrap_or_default()
    );
    println!("epochs run: {}", history.epochs.len());
    Ok(())
}

pub fn predict(ctx: &Context, a: &PredictArgs) -> Outcome {
    let model = NetworkModel::load(&a.model)?;
    let cfg = FeatureConfig {
        gradient: model.meta.gradient,
    };
    let results = extract_batch(&a.images, &cfg, Jobs(a.jobs.jobs));
    let mut out = String::from("path,score\n");
    let mut failures = Vec::new();
    for (p, r) in a.images.iter().zip(results) {
        match r.and_then(|f| model.forward(&f)) {
            Ok(score) => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record([p.display().to_string(), format!("{score:.16e}")])
                    .map_err(|e| Failure::Partial(e.to_string()))?;
                out.push_str(&String::from_utf8_lossy(&w.into_inner().map_err(|e| Failure::Partial(e.to_string()))?));
            }
            Err(e) => failures.push((p.display().to_string(), e.to_string())),
        }
    }
    match &a.out {
        Some(path) => write_file(path, &out)?,
        None => {
            let _ = std::io::stdout().write_all(out.as_bytes());
        }
    }
    ctx.note(format!("scored {} images", a.images.len() - failures.len()));
    report_failures(&failures, "images")
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Outcome {
    let model = NetworkModel::load(&a.model)?;
    let manifest = DatasetManifest::read(&a.manifest)?;
    let held_out: HashSet<String> = model.meta.held_out.iter().cloned().collect();
    let reports = evaluate_with_held_out(&model, &manifest, &held_out, Jobs(a.jobs.jobs))?;
    if reports.len() == 1 && !held_out.is_empty() {
        ctx.note("no held-out rows of the model appear in this manifest; reporting the full set only");
    }
    let mut csv = format!("{}\n", EvaluationReport::CSV_HEADER);
    for r in &reports {
        println!("{}", r.to_table());
        csv.push_str(&r.to_csv_rows());
    }
    write_file(&a.out, csv)?;
    let full = reports.last().expect("full report");
    if let Some(p) = &a.predictions {
        write_file(p, full.predictions_csv())?;
    }
    if a.plot {
        let pts: Vec<(f64, f64)> = full.predictions.iter().map(|p| (p.target, p.predicted)).collect();
        write_file(
            &a.out.with_extension("svg"),
            svg::scatter("Predicted vs target", "target", "predicted", &pts),
        )?;
    }
    let failures: Vec<(String, String)> = full.failures.iter().map(|f| (f.path.clone(), f.message.clone())).collect();
    report_failures(&failures, "manifest images")
}

const IMAGE_EXTENSIONS: [&str; 7] = ["png", "pgm", "ppm", "pnm", "pbm", "bmp", "pam"];

fn list_images(dir: &Path) -> nriqa::Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::Dataset(format!("no images found in {}", dir.display())));
    }
    Ok(out)
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Outcome {
    let ladder = LadderConfig::load(&a.ladder).map_err(|e| Failure::Usage(e.to_string()))?;
    let refs = match (&a.refs, a.procedural_refs) {
        (Some(dir), _) => list_images(dir)?,
        (None, Some(n)) if n > 0 => {
            let dir = a.out.join("refs");
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let (h, w) = a.size;
            (0..n)
                .map(|i| {
                    let p = dir.join(format!("ref_{i:03}.pgm"));
                    save_pgm(&procedural_reference(h, w, derive_seed(ctx.seed, &format!("refs/{i}"))), &p)?;
                    Ok(p)
                })
                .collect::<nriqa::Result<Vec<_>>>()?
        }
        _ => return Err(Failure::Usage("--procedural-refs must be positive".into())),
    };
    let specs = ladder.specs(ctx.seed);
    let m = generate_dataset(&refs, &specs, &ladder.half_severity, &a.out, Jobs(a.jobs.jobs))?;
    println!(
        "{} references x {} ladder steps: {} images, manifest {}",
        refs.len(),
        specs.len(),
        m.len(),
        a.out.join("manifest.csv").display()
    );
    Ok(())
}

pub fn ingest_live(_ctx: &Context, a: &IngestLiveArgs) -> Outcome {
    let m = ingest_live_r2(&a.root)?;
    let base = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let m = m.relocated(base)?;
    m.write(&a.out)?;
    let counts: Vec<String> = DistortionClass::ALL
        .iter()
        .filter(|c| m.count(**c) > 0)
        .map(|c| format!("{c} {}", m.count(*c)))
        .collect();
    println!("{} records ({})", m.len(), counts.join(", "));
    Ok(())
}

pub fn bench(ctx: &Context, a: &BenchArgs) -> Outcome {
    if a.repeats == 0 {
        return Err(Failure::Usage("--repeats must be at least 1".into()));
    }
    let plane = match &a.image {
        Some(p) => load_grayscale(p)?,
        None => procedural_reference(a.size.0, a.size.1, derive_seed(ctx.seed, "bench")),
    };
    let cfg = ctx.config.features;
    extract_features(&plane, &cfg)?;
    let mut ms: Vec<f64> = (0..a.repeats)
        .map(|_| {
            let t = Instant::now();
            let f = extract_features(&plane, &cfg);
            let elapsed = t.elapsed().as_secs_f64() * 1e3;
            f.map(|_| elapsed)
        })
        .collect::<nriqa::Result<_>>()?;
    ms.sort_by(f64::total_cmp);
    let median = if ms.len() % 2 == 1 {
        ms[ms.len() / 2]
    } else {
        0.5 * (ms[ms.len() / 2 - 1] + ms[ms.len() / 2])
    };
    let (h, w) = plane.dims();
    println!(
        "extract {h}x{w}: median {median:.3} ms, min {:.3} ms, max {:.3} ms over {} runs",
        ms[0],
        ms[ms.len() - 1],
        ms.len()
    );
    println!("median_ms={median:.3}");
    Ok(())
}
