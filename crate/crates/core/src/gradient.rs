//! Gradient magnitude (GM), relative gradient orientation (RO) and relative
//! gradient magnitude (RM) maps, and their three-scale variance features.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{convolve_same, downsample_half, GrayPlane, Kernel, MIN_SIDE};

/// Below this magnitude a derivative pair is treated as zero and its
/// orientation is defined as 0.
const ZERO_GRADIENT: f64 = 1e-12;

/// Gaussian derivative filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientConfig {
    pub sigma: f64,
    pub radius: usize,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            radius: 2,
        }
    }
}

/// GM, RO and RM maps for one scale. All three share the source shape.
#[derive(Debug, Clone)]
pub struct GradientMaps {
    pub gm: GrayPlane,
    pub ro: GrayPlane,
    pub rm: GrayPlane,
    pub scale: u8,
}

/// Sampled Gaussian partial-derivative filters `(Kx, Ky)`.
///
/// `Ky(x, y) = -y / (2 pi sigma^4) * exp(-(x^2 + y^2) / (2 sigma^2))` with `y`
/// the row offset; `Kx` is its transpose. Both are made exactly zero-sum.
pub fn gaussian_derivative_kernels(sigma: f64, radius: usize) -> Result<(Kernel, Kernel)> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Parameter(format!("derivative sigma must be positive, got {sigma}")));
    }
    if radius == 0 {
        return Err(Error::Parameter("derivative radius must be at least 1".into()));
    }
    let norm = 2.0 * PI * sigma.powi(4);
    let two_s2 = 2.0 * sigma * sigma;
    let mut ky = Kernel::from_fn(radius, |dy, dx| {
        let (y, x) = (dy as f64, dx as f64);
        -y / norm * (-(x * x + y * y) / two_s2).exp()
    })?;
    ky.remove_mean();
    let kx = ky.transpose();
    Ok((kx, ky))
}

#[inline]
fn orientation(y: f64, x: f64) -> f64 {
    if x.abs() < ZERO_GRADIENT && y.abs() < ZERO_GRADIENT {
        0.0
    } else {
        y.atan2(x)
    }
}

/// Wraps an angle difference in `(-2pi, 2pi)` into `(-pi, pi]`.
#[inline]
pub(crate) fn wrap_angle(mut a: f64) -> f64 {
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Computes GM, RO and RM for `plane` with the 3x3 local averaging window.
pub fn gradient_maps(plane: &GrayPlane, cfg: &GradientConfig) -> Result<GradientMaps> {
    gradient_maps_at_scale(plane, cfg, 0)
}

fn gradient_maps_at_scale(plane: &GrayPlane, cfg: &GradientConfig, scale: u8) -> Result<GradientMaps> {
    plane.require_min_side(MIN_SIDE)?;
    let (kx, ky) = gaussian_derivative_kernels(cfg.sigma, cfg.radius)?;
    let ix = convolve_same(plane, &kx)?;
    let iy = convolve_same(plane, &ky)?;
    let window = Kernel::boxed(1)?;
    let ix_avg = convolve_same(&ix, &window)?;
    let iy_avg = convolve_same(&iy, &window)?;

    let n = ix.data().len();
    let mut gm = Vec::with_capacity(n);
    let mut ro = Vec::with_capacity(n);
    let mut rm = Vec::with_capacity(n);
    for (((&x, &y), &xa), &ya) in ix
        .data()
        .iter()
        .zip(iy.data())
        .zip(ix_avg.data())
        .zip(iy_avg.data())
    {
        gm.push(x.hypot(y));
        ro.push(wrap_angle(orientation(y, x) - orientation(ya, xa)));
        rm.push((x - xa).hypot(y - ya));
    }
    let (h, w) = plane.dims();
    Ok(GradientMaps {
        gm: GrayPlane::from_raw(h, w, gm),
        ro: GrayPlane::from_raw(h, w, ro),
        rm: GrayPlane::from_raw(h, w, rm),
        scale,
    })
}

/// Population variance of all samples in the map.
pub fn map_variance(map: &GrayPlane) -> f64 {
    let data = map.data();
    if data.is_empty() {
        return 0.0;
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// `[Var(GM), Var(RO), Var(RM)]` at full, half and quarter scale, scale-major.
pub fn multiscale_gradient_features(plane: &GrayPlane, cfg: &GradientConfig) -> Result<[f64; 9]> {
    plane.require_min_side(4 * MIN_SIDE)?;
    let mut out = [0.0; 9];
    let mut current = plane.clone();
    for scale in 0..3u8 {
        if scale > 0 {
            current = downsample_half(&current)?;
        }
        let maps = gradient_maps_at_scale(&current, cfg, scale)?;
        let base = 3 * scale as usize;
        out[base] = map_variance(&maps.gm);
        out[base + 1] = map_variance(&maps.ro);
        out[base + 2] = map_variance(&maps.rm);
    }
    Ok(out)
}
