//! Synthetic distortions and graded dataset generation.
//!
//! Every generator is the identity at level 0 and deterministic given its
//! input, level and seed. Generated datasets carry a severity proxy target
//! `100 * (1 - exp(-level / half))`, with a per-kind `half` constant; 0 means
//! pristine.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{DatasetManifest, DistortionClass, ManifestRecord};
use crate::par::{map_ordered, Jobs};
use crate::raster::{load_grayscale, save_pgm, GrayPlane};
use crate::seed::derive_seed;

pub const DCT_BLOCK: usize = 8;

/// Fade mixes blur, contrast loss and noise, all scaled by the level.
pub const FADE_BLUR_PER_LEVEL: f64 = 0.5;
pub const FADE_CONTRAST_PER_LEVEL: f64 = 0.25;
pub const FADE_NOISE_PER_LEVEL: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    /// Gaussian blur; level is sigma in pixels.
    Gblur,
    /// Additive white Gaussian noise; level is the std in 8-bit units.
    Wn,
    /// Block-DCT quantization; level is the AC step in 8-bit units.
    JpegBlock,
    /// Blur, contrast attenuation and noise together.
    Fade,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 4] = [
        DistortionKind::Gblur,
        DistortionKind::Wn,
        DistortionKind::JpegBlock,
        DistortionKind::Fade,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DistortionKind::Gblur => "gblur",
            DistortionKind::Wn => "wn",
            DistortionKind::JpegBlock => "jpeg_block",
            DistortionKind::Fade => "fade",
        }
    }

    /// Manifest class. Block quantization stands in for `jpeg`; fade is
    /// not a model of the wireless channel distortion and maps to `other`.
    pub fn class(self) -> DistortionClass {
        match self {
            DistortionKind::Gblur => DistortionClass::Gblur,
            DistortionKind::Wn => DistortionClass::Wn,
            DistortionKind::JpegBlock => DistortionClass::Jpeg,
            DistortionKind::Fade => DistortionClass::Other,
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, DistortionKind::Wn | DistortionKind::Fade)
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistortionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown distortion kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub level: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, level: f64, seed: u64) -> Result<Self> {
        if !(level.is_finite() && level >= 0.0) {
            return Err(Error::Parameter(format!("{kind} level must be finite and >= 0, got {level}")));
        }
        Ok(Self { kind, level, seed })
    }

    pub fn apply(&self, plane: &GrayPlane) -> Result<GrayPlane> {
        match self.kind {
            DistortionKind::Gblur => gaussian_blur(plane, self.level),
            DistortionKind::Wn => add_white_noise(plane, self.level, self.seed),
            DistortionKind::JpegBlock => jpeg_blockiness(plane, self.level),
            DistortionKind::Fade => fade(plane, self.level, self.seed),
        }
    }
}

fn check_level(what: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} must be finite and >= 0, got {v}")))
    }
}

/// Normalized 1-D Gaussian taps over `[-r, r]`, `r = ceil(3 sigma)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// One separable pass along rows (`horizontal`) or columns, clamping
/// indices at the border. Written as `x + sum w (x_k - x)` so constant
/// regions pass through exactly.
fn blur_pass(plane: &GrayPlane, taps: &[f64], horizontal: bool) -> GrayPlane {
    let (h, w) = plane.dims();
    let r = (taps.len() / 2) as isize;
    GrayPlane::from_fn(h, w, |i, j| {
        let c = plane.get(i, j);
        let mut acc = 0.0;
        for (t, k) in taps.iter().zip(-r..=r) {
            let v = if horizontal {
                plane.get(i, (j as isize + k).clamp(0, w as isize - 1) as usize)
            } else {
                plane.get((i as isize + k).clamp(0, h as isize - 1) as usize, j)
            };
            acc += t * (v - c);
        }
        c + acc
    })
}

pub fn gaussian_blur(plane: &GrayPlane, sigma: f64) -> Result<GrayPlane> {
    check_level("blur sigma", sigma)?;
    if sigma == 0.0 {
        return Ok(plane.clone());
    }
    let taps = gaussian_taps(sigma);
    Ok(blur_pass(&blur_pass(plane, &taps, true), &taps, false))
}

/// Adds `N(0, (std_8bit / 255)^2)` noise and clamps to `[0, 1]`.
pub fn add_white_noise(plane: &GrayPlane, std_8bit: f64, seed: u64) -> Result<GrayPlane> {
    check_level("noise std", std_8bit)?;
    if std_8bit == 0.0 {
        return Ok(plane.clone());
    }
    let normal = Normal::new(0.0, std_8bit / 255.0).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = plane.dims();
    let data = plane.data().iter().map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0)).collect();
    GrayPlane::new(h, w, data)
}

fn dct_matrix() -> [[f64; DCT_BLOCK]; DCT_BLOCK] {
    let n = DCT_BLOCK as f64;
    let mut c = [[0.0; DCT_BLOCK]; DCT_BLOCK];
    for (k, row) in c.iter_mut().enumerate() {
        let a = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = a * (std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2.0 * n)).cos();
        }
    }
    c
}

type Block = [[f64; DCT_BLOCK]; DCT_BLOCK];

/// `a * b`, or `a^T * b` when `transpose_a`.
fn matmul(a: &Block, b: &Block, transpose_a: bool) -> Block {
    let mut out = [[0.0; DCT_BLOCK]; DCT_BLOCK];
    for i in 0..DCT_BLOCK {
        for j in 0..DCT_BLOCK {
            out[i][j] = (0..DCT_BLOCK)
                .map(|k| if transpose_a { a[k][i] } else { a[i][k] } * b[k][j])
                .sum();
        }
    }
    out
}

fn transpose(a: &Block) -> Block {
    let mut t = *a;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}

pub fn dct2(block: &Block) -> Block {
    let c = dct_matrix();
    matmul(&matmul(&c, block, false), &transpose(&c), false)
}

pub fn idct2(coef: &Block) -> Block {
    let c = dct_matrix();
    matmul(&matmul(&c, coef, true), &c, false)
}

/// 8x8 orthonormal DCT, AC coefficients quantized with step
/// `coarseness / 255`, inverse DCT, clamp. The DC term is kept, so a very
/// coarse setting leaves each block at its mean. Partial border blocks are
/// padded by edge replication and cropped afterwards.
pub fn jpeg_blockiness(plane: &GrayPlane, coarseness: f64) -> Result<GrayPlane> {
    check_level("quantization coarseness", coarseness)?;
    let (h, w) = plane.dims();
    let step = coarseness / 255.0;
    let mut out = vec![0.0; h * w];
    for bi in (0..h).step_by(DCT_BLOCK) {
        for bj in (0..w).step_by(DCT_BLOCK) {
            let mut block = [[0.0; DCT_BLOCK]; DCT_BLOCK];
            for (y, row) in block.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = plane.get((bi + y).min(h - 1), (bj + x).min(w - 1));
                }
            }
            let mut coef = dct2(&block);
            if step > 0.0 {
                for (u, row) in coef.iter_mut().enumerate() {
                    for (v, c) in row.iter_mut().enumerate() {
                        if u + v > 0 {
                            *c = step * (*c / step).round();
                        }
                    }
                }
            }
            let rec = idct2(&coef);
            for (y, row) in rec.iter().enumerate().take(h - bi) {
                for (x, v) in row.iter().enumerate().take(w - bj) {
                    out[(bi + y) * w + bj + x] = if step > 0.0 { v.clamp(0.0, 1.0) } else { *v };
                }
            }
        }
    }
    GrayPlane::new(h, w, out)
}

/// Blur with sigma `0.5 level`, contrast scaled by `1 / (1 + 0.25 level)`
/// around the image mean, then noise with std `1.5 level` (8-bit units).
pub fn fade(plane: &GrayPlane, level: f64, seed: u64) -> Result<GrayPlane> {
    check_level("fade level", level)?;
    if level == 0.0 {
        return Ok(plane.clone());
    }
    let blurred = gaussian_blur(plane, FADE_BLUR_PER_LEVEL * level)?;
    let mean = blurred.data().iter().sum::<f64>() / blurred.data().len() as f64;
    let gain = 1.0 / (1.0 + FADE_CONTRAST_PER_LEVEL * level);
    let flat = blurred.map(|v| mean + gain * (v - mean));
    add_white_noise(&flat, FADE_NOISE_PER_LEVEL * level, seed)
}

pub fn mse(a: &GrayPlane, b: &GrayPlane) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data().len() as f64)
}

/// Level at which the proxy target reaches `100 (1 - 1/e)`, per kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HalfSeverity {
    pub gblur: f64,
    pub wn: f64,
    pub jpeg_block: f64,
    pub fade: f64,
}

impl Default for HalfSeverity {
    fn default() -> Self {
        Self {
            gblur: 2.0,
            wn: 20.0,
            jpeg_block: 40.0,
            fade: 2.0,
        }
    }
}

impl HalfSeverity {
    pub fn get(&self, kind: DistortionKind) -> f64 {
        match kind {
            DistortionKind::Gblur => self.gblur,
            DistortionKind::Wn => self.wn,
            DistortionKind::JpegBlock => self.jpeg_block,
            DistortionKind::Fade => self.fade,
        }
    }
}

pub fn proxy_target(kind: DistortionKind, level: f64, half: &HalfSeverity) -> f64 {
    100.0 * (1.0 - (-level / half.get(kind)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderEntry {
    pub kind: DistortionKind,
    pub levels: Vec<f64>,
    /// Overrides the file-level seed for this kind.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Ladder file. `seed` is optional; without it the caller's seed is used.
///
/// ```toml
/// seed = 7
///
/// [half_severity]
/// wn = 25.0
///
/// [[ladder]]
/// kind = "gblur"
/// levels = [0.5, 1.0, 2.0, 4.0]
///
/// [[ladder]]
/// kind = "wn"
/// levels = [5, 10, 20, 40]
/// seed = 3
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub half_severity: HalfSeverity,
    pub ladder: Vec<LadderEntry>,
}

impl LadderConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: LadderConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::Config("ladder: at least one entry is required".into()));
        }
        for (i, e) in self.ladder.iter().enumerate() {
            if e.levels.is_empty() {
                return Err(Error::Config(format!("ladder[{i}].levels: empty list")));
            }
            if let Some((j, l)) = e.levels.iter().enumerate().find(|(_, l)| !(l.is_finite() && **l >= 0.0)) {
                return Err(Error::Config(format!("ladder[{i}].levels[{j}]: {l} is not a finite level >= 0")));
            }
        }
        for k in DistortionKind::ALL {
            let v = self.half_severity.get(k);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("half_severity.{k}: must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Expands the ladder; entries without a seed derive one from the file
    /// seed, or from `fallback_seed` when the file has none.
    pub fn specs(&self, fallback_seed: u64) -> Vec<DistortionSpec> {
        let base = self.seed.unwrap_or(fallback_seed);
        self.ladder
            .iter()
            .flat_map(|e| {
                let seed = e.seed.unwrap_or_else(|| derive_seed(base, e.kind.as_str()));
                e.levels.iter().map(move |&level| DistortionSpec {
                    kind: e.kind,
                    level,
                    seed,
                })
            })
            .collect()
    }
}

/// File stem used for reference `index` in generated datasets.
fn reference_tag(index: usize, path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let clean: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("r{index:03}_{clean}")
}

enum Job<'a> {
    Pristine(usize),
    Distorted(usize, usize, &'a DistortionSpec),
}

/// Writes a pristine copy of every reference and every (reference, spec)
/// distortion as PGM under `out_dir/images`, then `out_dir/manifest.csv`.
///
/// Stochastic kinds draw noise from `derive_seed(spec.seed, "<ref>/<spec>")`
/// so each reference and ladder step gets its own stream.
pub fn generate_dataset(
    refs: &[PathBuf],
    specs: &[DistortionSpec],
    half: &HalfSeverity,
    out_dir: &Path,
    jobs: Jobs,
) -> Result<DatasetManifest> {
    if refs.is_empty() {
        return Err(Error::Dataset("no reference images".into()));
    }
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let planes = map_ordered(refs, jobs, |_, p| load_grayscale(p)).into_iter().collect::<Result<Vec<_>>>()?;
    let tags: Vec<String> = refs.iter().enumerate().map(|(i, p)| reference_tag(i, p)).collect();

    let mut work = Vec::new();
    for r in 0..refs.len() {
        work.push(Job::Pristine(r));
        for (s, spec) in specs.iter().enumerate() {
            work.push(Job::Distorted(r, s, spec));
        }
    }
    let results = map_ordered(&work, jobs, |_, job| -> Result<ManifestRecord> {
        let (r, name, plane, class, level, target) = match *job {
            Job::Pristine(r) => (r, format!("{}_pristine.pgm", tags[r]), planes[r].clone(), DistortionClass::Pristine, None, 0.0),
            Job::Distorted(r, s, spec) => {
                let spec = DistortionSpec {
                    seed: derive_seed(spec.seed, &format!("{r}/{s}")),
                    ..*spec
                };
                let plane = spec.apply(&planes[r])?;
                let name = format!("{}_{}_{s:03}.pgm", tags[r], spec.kind);
                (r, name, plane, spec.kind.class(), Some(spec.level), proxy_target(spec.kind, spec.level, half))
            }
        };
        save_pgm(&plane, images.join(&name))?;
        Ok(ManifestRecord {
            path: format!("images/{name}"),
            class,
            level,
            target,
            reference_id: Some(tags[r].clone()),
        })
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::new(records, out_dir)?;
    manifest.write(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Smoothly interpolated lattice noise with `cells` cells across the
/// longer side.
fn value_noise(h: usize, w: usize, cells: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cell = h.max(w) as f64 / cells as f64;
    let (gh, gw) = ((h as f64 / cell) as usize + 2, (w as f64 / cell) as usize + 2);
    let grid: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let y = i as f64 / cell;
        let (y0, ty) = (y.floor() as usize, smooth(y.fract()));
        for j in 0..w {
            let x = j as f64 / cell;
            let (x0, tx) = (x.floor() as usize, smooth(x.fract()));
            let g = |a: usize, b: usize| grid[(y0 + a) * gw + x0 + b];
            let top = g(0, 0) + tx * (g(0, 1) - g(0, 0));
            let bottom = g(1, 0) + tx * (g(1, 1) - g(1, 0));
            out.push(top + ty * (bottom - top));
        }
    }
    out
}

/// A seeded natural-looking test image: multi-octave noise with roughly
/// 1/f amplitude falloff, overlaid with flat-shaded ellipses and rectangles
/// for sharp edges, scaled into `[0.05, 0.95]`.
pub fn procedural_reference(height: usize, width: usize, seed: u64) -> GrayPlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; height * width];
    let mut amp = 1.0;
    let mut cells = 2;
    while cells <= height.max(width) / 2 {
        for (d, n) in data.iter_mut().zip(value_noise(height, width, cells, &mut rng)) {
            *d += amp * n;
        }
        amp *= 0.5;
        cells *= 2;
    }
    let shapes = rng.random_range(6..14);
    for _ in 0..shapes {
        let cy = rng.random_range(0.0..height as f64);
        let cx = rng.random_range(0.0..width as f64);
        let ry = rng.random_range(0.05..0.3) * height as f64;
        let rx = rng.random_range(0.05..0.3) * width as f64;
        let level = rng.random_range(-1.5..1.5);
        let ellipse = rng.random_bool(0.5);
        for i in 0..height {
            for j in 0..width {
                let (dy, dx) = ((i as f64 - cy) / ry, (j as f64 - cx) / rx);
                let inside = if ellipse { dy * dy + dx * dx <= 1.0 } else { dy.abs() <= 1.0 && dx.abs() <= 1.0 };
                if inside {
                    let d = &mut data[i * width + j];
                    *d = level + 0.3 * *d;
                }
            }
        }
    }
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-12);
    GrayPlane::from_fn(height, width, |i, j| 0.05 + 0.9 * (data[i * width + j] - lo) / span)
}
