//! Grayscale planes, small square kernels, replicate-border convolution and
//! dyadic downsampling.
//!
//! All intensities live in `[0, 1]` after loading. Derived planes (gradients,
//! MSCN coefficients, products) reuse [`GrayPlane`] but are unbounded.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageError, ImageReader};

use crate::error::{Error, Result};

/// Smallest side length accepted for feature extraction inputs.
pub const MIN_SIDE: usize = 16;

/// Row-major plane of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPlane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayPlane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite sample {bad}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    // Internal constructor for planes whose length is correct by construction.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayPlane {
        GrayPlane::from_raw(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> GrayPlane {
        GrayPlane::from_fn(self.height, self.width, |i, j| self.get(i, self.width - 1 - j))
    }

    /// Rotate 90 degrees clockwise.
    pub fn rotate90(&self) -> GrayPlane {
        let (h, w) = self.dims();
        GrayPlane::from_fn(w, h, |i, j| self.get(h - 1 - j, i))
    }

    /// Errors unless both sides are at least `min_side`.
    pub fn require_min_side(&self, min_side: usize) -> Result<()> {
        if self.height < min_side || self.width < min_side {
            return Err(Error::Dimension(format!(
                "plane is {}x{}, need at least {min_side}x{min_side}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Quantizes to 8 bits: `round(clamp(v, 0, 1) * 255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Square convolution kernel with odd side `2 * radius + 1`, row-major.
/// Row offsets run along the vertical (y) axis, column offsets along x.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    radius: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(radius: usize, taps: Vec<f64>) -> Result<Self> {
        if radius == 0 {
            return Err(Error::Parameter("kernel radius must be at least 1".into()));
        }
        let side = 2 * radius + 1;
        if taps.len() != side * side {
            return Err(Error::Parameter(format!(
                "kernel of radius {radius} needs {} taps, got {}",
                side * side,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parameter("kernel taps must be finite".into()));
        }
        Ok(Self { radius, taps })
    }

    /// Builds a kernel from `f(dy, dx)` over the centered support.
    pub fn from_fn(radius: usize, f: impl Fn(isize, isize) -> f64) -> Result<Self> {
        let r = radius as isize;
        let mut taps = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                taps.push(f(dy, dx));
            }
        }
        Kernel::new(radius, taps)
    }

    pub fn delta(radius: usize) -> Result<Self> {
        Kernel::from_fn(radius, |dy, dx| if dy == 0 && dx == 0 { 1.0 } else { 0.0 })
    }

    /// Uniform mean filter.
    pub fn boxed(radius: usize) -> Result<Self> {
        let side = (2 * radius + 1) as f64;
        Kernel::from_fn(radius, |_, _| 1.0 / (side * side))
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at row offset `dy`, column offset `dx`.
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius as isize;
        self.taps[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn transpose(&self) -> Kernel {
        Kernel::from_fn(self.radius, |dy, dx| self.at(dx, dy)).expect("same shape")
    }

    /// Subtracts the tap mean. Taps are summed in point-mirrored pairs
    /// (`t[k] + t[n-1-k]`), so a kernel that is odd about its center keeps an
    /// exactly zero sum and exact antisymmetry.
    pub fn remove_mean(&mut self) {
        let mean = self.sum() / self.taps.len() as f64;
        if mean != 0.0 {
            for t in &mut self.taps {
                *t -= mean;
            }
        }
    }

    pub fn sum(&self) -> f64 {
        let n = self.taps.len();
        let mut sum = self.taps[n / 2];
        for k in 0..n / 2 {
            sum += self.taps[k] + self.taps[n - 1 - k];
        }
        sum
    }
}

fn map_image_error(path: &Path, e: ImageError) -> Error {
    match e {
        ImageError::IoError(source) => Error::io(path, source),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

fn luma(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)) / 255.0
}

/// Decodes an 8-bit gray or RGB raster into `[0, 1]` without a size floor.
/// Alpha channels are ignored. Color uses BT.601 luma weights.
pub fn decode_grayscale(path: impl AsRef<Path>) -> Result<GrayPlane> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(Error::Format(format!("{}: unrecognized raster format", path.display())));
    }
    let img = reader.decode().map_err(|e| map_image_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(Error::Format(format!(
                "{}: only 8-bit gray/RGB samples are supported, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    GrayPlane::new(h, w, data)
}

/// Loads an image for feature extraction: [`decode_grayscale`] plus the
/// 16x16 minimum size.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<GrayPlane> {
    let plane = decode_grayscale(path)?;
    plane.require_min_side(MIN_SIDE)?;
    Ok(plane)
}

/// Writes a binary (P5) 8-bit PGM.
pub fn save_pgm(plane: &GrayPlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", plane.width(), plane.height())?;
        out.write_all(&plane.to_u8())?;
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Copies `plane` into a buffer padded by `pad` on every side with edge
/// replication. Returns the buffer and its row stride.
pub(crate) fn pad_replicate(plane: &GrayPlane, pad: usize) -> (Vec<f64>, usize) {
    let (h, w) = plane.dims();
    let pw = w + 2 * pad;
    let ph = h + 2 * pad;
    let mut out = vec![0.0; pw * ph];
    for pi in 0..ph {
        let si = pi.saturating_sub(pad).min(h - 1);
        let src = plane.row(si);
        let dst = &mut out[pi * pw..(pi + 1) * pw];
        dst[..pad].fill(src[0]);
        dst[pad..pad + w].copy_from_slice(src);
        dst[pad + w..].fill(src[w - 1]);
    }
    (out, pw)
}

/// Same-size 2-D convolution with clamp-to-edge borders:
/// `out(i, j) = sum taps(k, l) * plane(i - k, j - l)`.
///
/// Per pixel, the four taps at `(+-k, +-l)` are combined as
/// `(t(k,l) a + t(k,-l) b) + (t(-k,l) c + t(-k,-l) d)` before joining the
/// running sum. Consequences: a left-right symmetric kernel commutes exactly
/// with a horizontal flip, and an odd kernel maps a constant plane to exact
/// zeros.
pub fn convolve_same(plane: &GrayPlane, kernel: &Kernel) -> Result<GrayPlane> {
    let side = kernel.side();
    let (h, w) = plane.dims();
    if h < side || w < side {
        return Err(Error::Dimension(format!(
            "kernel side {side} exceeds plane {h}x{w}"
        )));
    }
    let r = kernel.radius();
    let (pad, pw) = pad_replicate(plane, r);
    let mut out = vec![0.0; h * w];
    // Source slice for tap (k, l): output (i, j) reads padded (i - k + r, j - l + r).
    let src = |i: usize, k: isize, l: isize| -> &[f64] {
        let start = ((i as isize - k + r as isize) as usize) * pw + (r as isize - l) as usize;
        &pad[start..start + w]
    };
    for k in 0..=r as isize {
        for l in 0..=r as isize {
            let mut group: Vec<(isize, isize)> = vec![(k, l)];
            if l > 0 {
                group.push((k, -l));
            }
            if k > 0 {
                group.push((-k, l));
                if l > 0 {
                    group.push((-k, -l));
                }
            }
            let taps: Vec<f64> = group.iter().map(|&(a, b)| kernel.at(a, b)).collect();
            if taps.iter().all(|&t| t == 0.0) {
                continue;
            }
            for i in 0..h {
                let dst = &mut out[i * w..(i + 1) * w];
                match group.len() {
                    1 => {
                        let (s0, t0) = (src(i, k, l), taps[0]);
                        for (d, a) in dst.iter_mut().zip(s0) {
                            *d += t0 * a;
                        }
                    }
                    2 => {
                        let (s0, s1) = (src(i, group[0].0, group[0].1), src(i, group[1].0, group[1].1));
                        let (t0, t1) = (taps[0], taps[1]);
                        for ((d, a), b) in dst.iter_mut().zip(s0).zip(s1) {
                            *d += t0 * a + t1 * b;
                        }
                    }
                    _ => {
                        let s0 = src(i, k, l);
                        let s1 = src(i, k, -l);
                        let s2 = src(i, -k, l);
                        let s3 = src(i, -k, -l);
                        let (t0, t1, t2, t3) = (taps[0], taps[1], taps[2], taps[3]);
                        for j in 0..w {
                            dst[j] += (t0 * s0[j] + t1 * s1[j]) + (t2 * s2[j] + t3 * s3[j]);
                        }
                    }
                }
            }
        }
    }
    Ok(GrayPlane::from_raw(h, w, out))
}

/// Halves each side by averaging 2x2 blocks; a trailing odd row or column is
/// dropped.
pub fn downsample_half(plane: &GrayPlane) -> Result<GrayPlane> {
    let (h, w) = plane.dims();
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!("cannot downsample {h}x{w} plane")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        let top = plane.row(2 * i);
        let bottom = plane.row(2 * i + 1);
        for j in 0..ow {
            let a = top[2 * j] + top[2 * j + 1];
            let b = bottom[2 * j] + bottom[2 * j + 1];
            out.push((a + b) * 0.25);
        }
    }
    Ok(GrayPlane::from_raw(oh, ow, out))
}
