//! Independent reference implementations shared by the test targets.

#![allow(dead_code)]

use std::f64::consts::PI;

use nriqa::net::{batch_mse, mse_and_gradient, Batch, Network, Objective, Topology};
use nriqa::par::Jobs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

// Gradient block

pub struct Img {
    pub h: usize,
    pub w: usize,
    pub px: Vec<f64>,
}

impl Img {
    fn at(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.h as isize - 1) as usize;
        let j = j.clamp(0, self.w as isize - 1) as usize;
        self.px[i * self.w + j]
    }
}

pub fn ky_tap(dy: isize, dx: isize, sigma: f64) -> f64 {
    let (y, x) = (dy as f64, dx as f64);
    -y / (2.0 * PI * sigma.powi(4)) * (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
}

pub fn oracle_kernels(sigma: f64, r: isize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let side = (2 * r + 1) as usize;
    let mut ky = vec![vec![0.0; side]; side];
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = ky_tap(dy, dx, sigma);
            ky[(dy + r) as usize][(dx + r) as usize] = v;
            total += v;
        }
    }
    let mean = total / (side * side) as f64;
    for row in &mut ky {
        for v in row.iter_mut() {
            *v -= mean;
        }
    }
    let mut kx = vec![vec![0.0; side]; side];
    for a in 0..side {
        for b in 0..side {
            kx[a][b] = ky[b][a];
        }
    }
    (kx, ky)
}

pub fn convolve(img: &Img, k: &[Vec<f64>]) -> Img {
    let r = (k.len() / 2) as isize;
    let mut px = Vec::with_capacity(img.h * img.w);
    for i in 0..img.h as isize {
        for j in 0..img.w as isize {
            let mut s = 0.0;
            for a in -r..=r {
                for b in -r..=r {
                    s += k[(a + r) as usize][(b + r) as usize] * img.at(i - a, j - b);
                }
            }
            px.push(s);
        }
    }
    Img { h: img.h, w: img.w, px }
}

pub fn box3(img: &Img) -> Img {
    let k = vec![vec![1.0 / 9.0; 3]; 3];
    convolve(img, &k)
}

pub fn angle(y: f64, x: f64) -> f64 {
    if x.abs() < 1e-12 && y.abs() < 1e-12 {
        0.0
    } else {
        y.atan2(x)
    }
}

pub fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

pub fn halve(img: &Img) -> Img {
    let (h, w) = (img.h / 2, img.w / 2);
    let mut px = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let s = img.px[2 * i * img.w + 2 * j]
                + img.px[2 * i * img.w + 2 * j + 1]
                + img.px[(2 * i + 1) * img.w + 2 * j]
                + img.px[(2 * i + 1) * img.w + 2 * j + 1];
            px.push(s / 4.0);
        }
    }
    Img { h, w, px }
}

pub fn oracle_gradient_block(img: &Img, sigma: f64, radius: isize) -> [f64; 9] {
    let (kx, ky) = oracle_kernels(sigma, radius);
    let mut out = [0.0; 9];
    let mut cur = Img { h: img.h, w: img.w, px: img.px.clone() };
    for s in 0..3 {
        if s > 0 {
            cur = halve(&cur);
        }
        let ix = convolve(&cur, &kx);
        let iy = convolve(&cur, &ky);
        let ixa = box3(&ix);
        let iya = box3(&iy);
        let mut gm = Vec::new();
        let mut ro = Vec::new();
        let mut rm = Vec::new();
        for p in 0..ix.px.len() {
            let (x, y, xa, ya) = (ix.px[p], iy.px[p], ixa.px[p], iya.px[p]);
            gm.push((x * x + y * y).sqrt());
            let mut d = angle(y, x) - angle(ya, xa);
            if d > PI {
                d -= 2.0 * PI;
            } else if d <= -PI {
                d += 2.0 * PI;
            }
            ro.push(d);
            rm.push(((x - xa).powi(2) + (y - ya).powi(2)).sqrt());
        }
        out[3 * s] = variance(&gm);
        out[3 * s + 1] = variance(&ro);
        out[3 * s + 2] = variance(&rm);
    }
    out
}

pub fn random_image(h: usize, w: usize, seed: u64, smooth: bool) -> Img {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px: Vec<f64> = if smooth {
        let (fy, fx, ph): (f64, f64, f64) = (rng.random_range(0.02..0.2), rng.random_range(0.02..0.2), rng.random());
        (0..h * w)
            .map(|k| {
                let (i, j) = ((k / w) as f64, (k % w) as f64);
                let base = 0.5 + 0.3 * (fy * i + 6.0 * ph).sin() * (fx * j).cos();
                (base + 0.05 * rng.random::<f64>()).clamp(0.0, 1.0)
            })
            .collect()
    } else {
        (0..h * w).map(|_| f64::from(rng.random_range(0u8..=255)) / 255.0).collect()
    };
    Img { h, w, px }
}

// Kendall tau-b by pair enumeration

pub fn kendall_enumerated(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut tx, mut ty) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() as i64 * i64::from(x[i] != x[j]);
            let dy = (y[i] - y[j]).signum() as i64 * i64::from(y[i] != y[j]);
            s += dx * dy;
            tx += i64::from(dx == 0);
            ty += i64::from(dy == 0);
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 - tx) as f64).sqrt() * ((n0 - ty) as f64).sqrt();
    (s as f64 / denom).clamp(-1.0, 1.0)
}

// Consistent least squares in any dimension

pub struct LeastSquares {
    a: Vec<f64>,
    b: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl LeastSquares {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        let w_star: Vec<f64> = (0..cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b = (0..rows)
            .map(|r| a[r * cols..(r + 1) * cols].iter().zip(&w_star).map(|(x, y)| x * y).sum())
            .collect();
        Self { a, b, rows, cols }
    }
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.cols
    }

    /// `0.5/m * |A w - b|^2`
    fn evaluate(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.cols];
        let mut loss = 0.0;
        for r in 0..self.rows {
            let row = &self.a[r * self.cols..(r + 1) * self.cols];
            let e = row.iter().zip(w).map(|(a, x)| a * x).sum::<f64>() - self.b[r];
            loss += e * e;
            for (gi, a) in g.iter_mut().zip(row) {
                *gi += e * a;
            }
        }
        let m = self.rows as f64;
        g.iter_mut().for_each(|v| *v /= m);
        (0.5 * loss / m, g)
    }
}

// Distribution samplers

/// `|x| = beta * G^(1/shape)` with `G ~ Gamma(1/shape)`; the side is chosen
/// with probability proportional to its scale.
pub fn sample_aggd(n: usize, shape: f64, beta_l: f64, beta_r: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(1.0 / shape, 1.0).unwrap();
    let p_left = beta_l / (beta_l + beta_r);
    (0..n)
        .map(|_| {
            let mag = gamma.sample(&mut rng).powf(1.0 / shape);
            if rng.random_bool(p_left) {
                -beta_l * mag
            } else {
                beta_r * mag
            }
        })
        .collect()
}

// Backpropagation against central differences

/// Largest `|fd - bp| / max(|fd|, |bp|)` over all coordinates of the default
/// network with seed `model`, on a 5-row batch.
pub fn worst_fd_relative_error(model: u64, step: f64) -> f64 {
    let t = Topology::default();
    let net = Network::init(t, 100 + model);
    let mut rng = ChaCha8Rng::seed_from_u64(model);
    let inputs: Vec<f64> = (0..5 * 27).map(|_| StandardNormal.sample(&mut rng)).collect();
    let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = Batch::new(27, inputs, targets).unwrap();
    let p = net.params().to_vec();
    let (_, g) = mse_and_gradient(&t, &p, &batch, Jobs::SEQUENTIAL).unwrap();
    let mut q = p.clone();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        q[i] = p[i] + step;
        let up = batch_mse(&t, &q, &batch, Jobs::SEQUENTIAL);
        q[i] = p[i] - step;
        let down = batch_mse(&t, &q, &batch, Jobs::SEQUENTIAL);
        q[i] = p[i];
        let fd = (up - down) / (2.0 * step);
        let scale = fd.abs().max(g[i].abs());
        if scale > 0.0 {
            worst = worst.max((fd - g[i]).abs() / scale);
        }
    }
    worst
}
