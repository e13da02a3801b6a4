//! Mean-subtracted contrast-normalized (MSCN) coefficients, their paired
//! products, and the 18 luminance/product features.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::fit::{fit_aggd, fit_ggd, AggdParams, GgdParams};
use crate::raster::{pad_replicate, GrayPlane, MIN_SIDE};

/// Local statistics window: 7x7 Gaussian, standard deviation 7/6, unit sum.
pub const WINDOW_RADIUS: usize = 3;
pub const WINDOW_SIGMA: f64 = 7.0 / 6.0;
/// MSCN runs on 8-bit scaled intensities so the `+1` stabilizer is
/// calibrated to an 8-bit dynamic range.
pub const INTENSITY_SCALE: f64 = 255.0;

/// MSCN coefficients: `(I - mu) / (sigma + 1)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MscnPlane(GrayPlane);

impl MscnPlane {
    pub fn from_plane(plane: GrayPlane) -> Self {
        MscnPlane(plane)
    }

    pub fn into_inner(self) -> GrayPlane {
        self.0
    }
}

impl Deref for MscnPlane {
    type Target = GrayPlane;

    fn deref(&self) -> &GrayPlane {
        &self.0
    }
}

/// Unit-sum 7x7 Gaussian weights, row-major.
pub fn gaussian_window() -> Vec<f64> {
    let r = WINDOW_RADIUS as isize;
    let mut w = Vec::with_capacity((2 * WINDOW_RADIUS + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dy * dy + dx * dx) as f64;
            w.push((-d2 / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// MSCN transform with replicate borders.
///
/// The local mean is accumulated as `I(i,j) + sum w (I_nb - I(i,j))`, so flat
/// regions give exactly zero coefficients. The local variance is the weighted
/// mean of `(I_nb - mu)^2`.
pub fn mscn(plane: &GrayPlane) -> Result<MscnPlane> {
    plane.require_min_side(MIN_SIDE)?;
    let weights = gaussian_window();
    let r = WINDOW_RADIUS;
    let side = 2 * r + 1;
    let scaled = plane.map(|v| v * INTENSITY_SCALE);
    let (h, w) = scaled.dims();
    let (pad, pw) = pad_replicate(&scaled, r);

    let mut diff_sum = vec![0.0; h * w];
    for (t, &wt) in weights.iter().enumerate() {
        let (ky, kx) = (t / side, t % side);
        for i in 0..h {
            let src = &pad[(i + ky) * pw + kx..(i + ky) * pw + kx + w];
            let center = scaled.row(i);
            let dst = &mut diff_sum[i * w..(i + 1) * w];
            for ((d, &s), &c) in dst.iter_mut().zip(src).zip(center) {
                *d += wt * (s - c);
            }
        }
    }
    let mu: Vec<f64> = scaled.data().iter().zip(&diff_sum).map(|(c, d)| c + d).collect();

    let mut var = vec![0.0; h * w];
    for (t, &wt) in weights.iter().enumerate() {
        let (ky, kx) = (t / side, t % side);
        for i in 0..h {
            let src = &pad[(i + ky) * pw + kx..(i + ky) * pw + kx + w];
            let m = &mu[i * w..(i + 1) * w];
            let dst = &mut var[i * w..(i + 1) * w];
            for ((d, &s), &mv) in dst.iter_mut().zip(src).zip(m) {
                let e = s - mv;
                *d += wt * e * e;
            }
        }
    }

    // I - mu is exactly -diff_sum
    let out = diff_sum
        .iter()
        .zip(&var)
        .map(|(&d, &v)| -d / (v.max(0.0).sqrt() + 1.0))
        .collect();
    Ok(MscnPlane(GrayPlane::from_raw(h, w, out)))
}

/// Horizontal, vertical, main-diagonal and anti-diagonal neighbor products,
/// in that order. Each plane drops the rows/columns its shift runs off.
pub fn paired_products(m: &GrayPlane) -> Result<[GrayPlane; 4]> {
    let (h, w) = m.dims();
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!("paired products need at least 2x2, got {h}x{w}")));
    }
    let horizontal = GrayPlane::from_fn(h, w - 1, |i, j| m.get(i, j) * m.get(i, j + 1));
    let vertical = GrayPlane::from_fn(h - 1, w, |i, j| m.get(i, j) * m.get(i + 1, j));
    let diag = GrayPlane::from_fn(h - 1, w - 1, |i, j| m.get(i, j) * m.get(i + 1, j + 1));
    // column 0 has no lower-left neighbor
    let anti = GrayPlane::from_fn(h - 1, w - 1, |i, j| m.get(i, j + 1) * m.get(i + 1, j));
    Ok([horizontal, vertical, diag, anti])
}

/// Fitted distribution parameters behind the 18 MSCN features.
#[derive(Debug, Clone, Copy)]
pub struct MscnFits {
    pub ggd: GgdParams,
    pub products: [AggdParams; 4],
}

impl MscnFits {
    /// `[alpha, beta]`, then `[shape, mean, beta_left, beta_right]` for H, V,
    /// D1, D2.
    pub fn to_features(&self) -> [f64; 18] {
        let mut out = [0.0; 18];
        out[0] = self.ggd.alpha;
        out[1] = self.ggd.beta;
        for (k, p) in self.products.iter().enumerate() {
            let b = 2 + 4 * k;
            out[b] = p.shape;
            out[b + 1] = p.mean;
            out[b + 2] = p.beta_left;
            out[b + 3] = p.beta_right;
        }
        out
    }

    pub fn any_clamped(&self) -> bool {
        self.ggd.clamped || self.products.iter().any(|p| p.clamped)
    }
}

pub fn mscn_fits(plane: &GrayPlane) -> Result<MscnFits> {
    let m = mscn(plane)?;
    let ggd = fit_ggd(m.data())?;
    let [h, v, d1, d2] = paired_products(&m)?;
    Ok(MscnFits {
        ggd,
        products: [
            fit_aggd(h.data())?,
            fit_aggd(v.data())?,
            fit_aggd(d1.data())?,
            fit_aggd(d2.data())?,
        ],
    })
}

pub fn mscn_features(plane: &GrayPlane) -> Result<[f64; 18]> {
    Ok(mscn_fits(plane)?.to_features())
}
