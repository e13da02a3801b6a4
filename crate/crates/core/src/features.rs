//! The 27-element feature vector, z-score normalization, and feature CSV
//! files.
//!
//! Layout (version [`FEATURE_LAYOUT_VERSION`]):
//!
//! | index | content |
//! |-------|---------|
//! | 0-2   | Var(GM), Var(RO), Var(RM) at full scale |
//! | 3-5   | same at 1/2 scale |
//! | 6-8   | same at 1/4 scale |
//! | 9-10  | GGD alpha, beta of the MSCN coefficients |
//! | 11-26 | AGGD shape, mean, beta_left, beta_right for H, V, D1, D2 products |

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::ops::Deref;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{multiscale_gradient_features, GradientConfig};
use crate::mscn::mscn_features;
use crate::par::{map_ordered, Jobs};
use crate::raster::{load_grayscale, GrayPlane};

pub const FEATURE_COUNT: usize = 27;
pub const FEATURE_LAYOUT_VERSION: u32 = 1;
/// Smallest image side accepted by [`extract_features`].
pub const MIN_EXTRACT_SIDE: usize = 64;
/// Floor applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "gm_var_s0", "ro_var_s0", "rm_var_s0",
    "gm_var_s1", "ro_var_s1", "rm_var_s1",
    "gm_var_s2", "ro_var_s2", "rm_var_s2",
    "ggd_alpha", "ggd_beta",
    "h_shape", "h_mean", "h_beta_left", "h_beta_right",
    "v_shape", "v_mean", "v_beta_left", "v_beta_right",
    "d1_shape", "d1_mean", "d1_beta_left", "d1_beta_right",
    "d2_shape", "d2_mean", "d2_beta_left", "d2_beta_right",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_COUNT]) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("feature {} is not finite", FEATURE_NAMES[k])));
        }
        Ok(FeatureVector(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_COUNT] = values.try_into().map_err(|_| {
            Error::Input(format!("expected {FEATURE_COUNT} features, got {}", values.len()))
        })?;
        FeatureVector::new(arr)
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub gradient: GradientConfig,
}

/// Gradient block followed by the MSCN block.
pub fn extract_features(plane: &GrayPlane, cfg: &FeatureConfig) -> Result<FeatureVector> {
    plane.require_min_side(MIN_EXTRACT_SIDE)?;
    let gradient = multiscale_gradient_features(plane, &cfg.gradient)?;
    let luminance = mscn_features(plane)?;
    let mut out = [0.0; FEATURE_COUNT];
    out[..9].copy_from_slice(&gradient);
    out[9..].copy_from_slice(&luminance);
    FeatureVector::new(out)
}

pub fn extract_file(path: &Path, cfg: &FeatureConfig) -> Result<FeatureVector> {
    extract_features(&load_grayscale(path)?, cfg)
}

/// Extracts every file, one result per input, in input order.
pub fn extract_batch<P>(paths: &[P], cfg: &FeatureConfig, jobs: Jobs) -> Vec<Result<FeatureVector>>
where
    P: AsRef<Path> + Sync,
{
    map_ordered(paths, jobs, |_, p| extract_file(p.as_ref(), cfg))
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Mean 0, std 1: leaves inputs unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn apply_vector(&self, v: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; FEATURE_COUNT];
        out.copy_from_slice(&self.apply(v));
        FeatureVector(out)
    }
}

pub fn fit_normalizer<R: AsRef<[f64]>>(rows: &[R]) -> Result<NormalizationStats> {
    if rows.len() < 2 {
        return Err(Error::Parameter(format!(
            "normalizer needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let dim = rows[0].as_ref().len();
    if rows.iter().any(|r| r.as_ref().len() != dim) {
        return Err(Error::Parameter("rows have differing lengths".into()));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    Ok(NormalizationStats { mean, std })
}

/// One line of a feature CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub path: String,
    pub features: FeatureVector,
    pub target: Option<f64>,
}

pub fn feature_csv_header() -> Vec<String> {
    let mut h = vec!["path".to_string()];
    h.extend((0..FEATURE_COUNT).map(|k| format!("f{k:02}")));
    h.push("target".to_string());
    h
}

/// Shortest-exact formatting with 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_feature_csv(path: impl AsRef<Path>, rows: &[FeatureRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let to_err = |e: csv::Error| Error::malformed(path, e.to_string());
    w.write_record(feature_csv_header()).map_err(to_err)?;
    for row in rows {
        let mut rec = Vec::with_capacity(FEATURE_COUNT + 2);
        rec.push(row.path.clone());
        rec.extend(row.features.iter().map(|&v| fmt_f64(v)));
        rec.push(row.target.map(fmt_f64).unwrap_or_default());
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::malformed(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != feature_csv_header() {
        return Err(Error::malformed(path, "unexpected feature CSV header"));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::malformed(path, e.to_string()))?;
        let bad = |what: &str| Error::malformed(path, format!("row {}: {what}", line + 1));
        let mut values = [0.0; FEATURE_COUNT];
        for (k, v) in values.iter_mut().enumerate() {
            *v = rec[k + 1].trim().parse().map_err(|_| bad(&format!("bad value in f{k:02}")))?;
        }
        let target_field = rec[FEATURE_COUNT + 1].trim();
        let target = if target_field.is_empty() {
            None
        } else {
            Some(target_field.parse().map_err(|_| bad("bad target"))?)
        };
        rows.push(FeatureRow {
            path: rec[0].to_string(),
            features: FeatureVector::new(values).map_err(|e| bad(&e.to_string()))?,
            target,
        });
    }
    Ok(rows)
}

/// Resolves `p` relative to `base_dir` unless it is already absolute.
pub(crate) fn resolve_relative(base_dir: &Path, p: &str) -> PathBuf {
    let candidate = Path::new(p);
    if candidate.is_absolute() {
        candidate.to_path_buf()
    } else {
        base_dir.join(candidate)
    }
}
