use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// No-reference image quality assessment: feature extraction, training,
/// prediction, evaluation and synthetic dataset generation.
///
/// Exit status: 0 on success, 1 on a runtime or data failure, 2 on a usage
/// or configuration error.
#[derive(Debug, Parser)]
#[command(name = "nriqa", version)]
pub struct Cli {
    /// Master seed; every random stage derives its own seed from it
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Size of the worker thread pool (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Print progress and diagnostics to stderr
    #[arg(long, short, global = true)]
    pub verbose: bool,

    /// TOML file with [train] and [features] sections overriding defaults;
    /// command-line flags take precedence over it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the 27 features of each image into a feature CSV
    Extract(ExtractArgs),
    /// Train the network on a feature CSV or a manifest
    Train(TrainArgs),
    /// Score images with a trained model
    Predict(PredictArgs),
    /// Correlate model predictions with manifest targets, per class
    Evaluate(EvaluateArgs),
    /// Generate a graded synthetic dataset from reference images
    Synth(SynthArgs),
    /// Build a manifest from a LIVE release-2 database directory
    IngestLive(IngestLiveArgs),
    /// Time single-threaded feature extraction on one image
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct JobsArg {
    /// Parallel workers for per-image work (0 = all threads, 1 = sequential);
    /// output order never depends on it
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Manifest CSV whose images (and targets) to extract
    #[arg(long, conflicts_with = "images")]
    pub manifest: Option<PathBuf>,

    /// Image files to extract
    #[arg(required_unless_present = "manifest")]
    pub images: Vec<PathBuf>,

    /// Output feature CSV
    #[arg(long, short)]
    pub out: PathBuf,

    /// Stop at the first image that fails
    #[arg(long)]
    pub fail_fast: bool,

    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    /// Shuffle individual rows
    Random,
    /// Keep all rows of one reference image in the same split
    ContentDisjoint,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSV with targets
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub features: Option<PathBuf>,

    /// Manifest CSV; features are extracted first
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// Output model file; the history goes to <stem>.history.csv next to it
    #[arg(long, short)]
    pub out: PathBuf,

    /// Maximum number of epochs
    #[arg(long)]
    pub max_epochs: Option<usize>,

    /// Consecutive epochs without validation improvement before stopping
    #[arg(long)]
    pub max_validation_failures: Option<usize>,

    /// Hidden units
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Training fraction
    #[arg(long)]
    pub train_fraction: Option<f64>,

    /// Validation fraction
    #[arg(long)]
    pub validation_fraction: Option<f64>,

    /// Test (held-out) fraction
    #[arg(long)]
    pub test_fraction: Option<f64>,

    /// Split mode; content-disjoint needs reference ids in the manifest
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,

    /// What the targets mean, recorded in the model (e.g. dmos, mos)
    #[arg(long, default_value = "dmos")]
    pub target_convention: String,

    /// Also write <stem>.history.svg with the MSE curves
    #[arg(long)]
    pub plot: bool,

    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file
    #[arg(long, short)]
    pub model: PathBuf,

    /// Images to score
    #[arg(required = true)]
    pub images: Vec<PathBuf>,

    /// Output CSV `path,score`; printed to stdout when omitted
    #[arg(long, short)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model file
    #[arg(long, short)]
    pub model: PathBuf,

    /// Manifest CSV with targets
    #[arg(long)]
    pub manifest: PathBuf,

    /// Report CSV
    #[arg(long, short)]
    pub out: PathBuf,

    /// Per-image prediction dump CSV
    #[arg(long)]
    pub predictions: Option<PathBuf>,

    /// Also write a predicted-vs-target SVG next to the report
    #[arg(long)]
    pub plot: bool,

    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of reference images (png, pgm, ppm, bmp)
    #[arg(long, required_unless_present = "procedural_refs")]
    pub refs: Option<PathBuf>,

    /// Generate this many procedural reference images instead of reading --refs
    #[arg(long, conflicts_with = "refs")]
    pub procedural_refs: Option<usize>,

    /// Side lengths of procedural references, HEIGHTxWIDTH
    #[arg(long, default_value = "256x256", value_parser = parse_size)]
    pub size: (usize, usize),

    /// Ladder TOML file
    #[arg(long)]
    pub ladder: PathBuf,

    /// Output directory (images/ and manifest.csv)
    #[arg(long, short)]
    pub out: PathBuf,

    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct IngestLiveArgs {
    /// Database root directory
    #[arg(long)]
    pub root: PathBuf,

    /// Output manifest CSV
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Image to time; a procedural image of --size is used when omitted
    #[arg(long)]
    pub image: Option<PathBuf>,

    /// HEIGHTxWIDTH of the procedural image
    #[arg(long, default_value = "512x768", value_parser = parse_size)]
    pub size: (usize, usize),

    /// Timed repetitions after one warm-up run
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HEIGHTxWIDTH, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad size component `{v}`"));
    let (h, w) = (parse(h)?, parse(w)?);
    if h == 0 || w == 0 {
        return Err("sizes must be positive".into());
    }
    Ok((h, w))
}
