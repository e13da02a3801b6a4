use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_COUNT;
use crate::par::{map_chunks, Jobs};

pub const DEFAULT_HIDDEN: usize = 30;
/// Trainable parameters of the default 27-30-1 network.
pub const DEFAULT_PARAM_COUNT: usize = 871;

/// Rows per gradient chunk. Fixed so the summation order never depends on the
/// worker count.
const GRAD_CHUNK_ROWS: usize = 32;

/// Single-hidden-layer, single-output topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub inputs: usize,
    pub hidden: usize,
}

impl Default for Topology {
    fn default() -> Self {
        let t = Topology {
            inputs: FEATURE_COUNT,
            hidden: DEFAULT_HIDDEN,
        };
        assert_eq!(t.param_count(), DEFAULT_PARAM_COUNT);
        t
    }
}

impl Topology {
    /// `hidden * inputs + hidden + hidden + 1`.
    pub fn param_count(&self) -> usize {
        self.hidden * self.inputs + 2 * self.hidden + 1
    }

    fn w1(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.inputs
    }

    fn b1(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.inputs;
        s..s + self.hidden
    }

    fn w2(&self) -> std::ops::Range<usize> {
        let s = self.hidden * (self.inputs + 1);
        s..s + self.hidden
    }

    fn b2(&self) -> usize {
        self.hidden * (self.inputs + 2)
    }
}

/// Tanh hidden layer, identity output. Parameters are stored flat in the
/// order `w1` (row-major, one row per hidden unit), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    topology: Topology,
    params: Vec<f64>,
}

impl Network {
    pub fn zeros(topology: Topology) -> Self {
        Self {
            topology,
            params: vec![0.0; topology.param_count()],
        }
    }

    pub fn from_params(topology: Topology, params: Vec<f64>) -> Result<Self> {
        if params.len() != topology.param_count() {
            return Err(Error::Consistency(format!(
                "topology {}-{}-1 needs {} parameters, got {}",
                topology.inputs,
                topology.hidden,
                topology.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Consistency("non-finite parameter".into()));
        }
        Ok(Self { topology, params })
    }

    /// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer, zero
    /// biases.
    pub fn init(topology: Topology, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::zeros(topology);
        let bound1 = 1.0 / (topology.inputs as f64).sqrt();
        let bound2 = 1.0 / (topology.hidden as f64).sqrt();
        for w in &mut net.params[topology.w1()] {
            *w = rng.random_range(-bound1..=bound1);
        }
        for w in &mut net.params[topology.w2()] {
            *w = rng.random_range(-bound2..=bound2);
        }
        net
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.params.copy_from_slice(params);
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[self.topology.w1()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.params[self.topology.b1()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.params[self.topology.w2()]
    }

    pub fn b2(&self) -> f64 {
        self.params[self.topology.b2()]
    }

    /// Output for an already-normalized input.
    pub fn forward(&self, z: &[f64]) -> f64 {
        forward_with(&self.topology, &self.params, z, None)
    }
}

fn forward_with(t: &Topology, params: &[f64], z: &[f64], hidden_out: Option<&mut [f64]>) -> f64 {
    let w1 = &params[t.w1()];
    let b1 = &params[t.b1()];
    let w2 = &params[t.w2()];
    let mut out = params[t.b2()];
    let mut scratch;
    let hidden = match hidden_out {
        Some(h) => h,
        None => {
            scratch = vec![0.0; t.hidden];
            &mut scratch[..]
        }
    };
    for k in 0..t.hidden {
        let row = &w1[k * t.inputs..(k + 1) * t.inputs];
        let a = b1[k] + row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
        let h = a.tanh();
        hidden[k] = h;
        out += w2[k] * h;
    }
    out
}

/// Normalized training rows stored as one flat row-major matrix.
#[derive(Debug, Clone)]
pub struct Batch {
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Batch {
    pub fn new(dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * targets.len() {
            return Err(Error::Parameter("batch shape mismatch".into()));
        }
        Ok(Self {
            dim,
            inputs,
            targets,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], targets: &[f64]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.len() != targets.len() || rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::Parameter("batch rows and targets disagree".into()));
        }
        Batch::new(dim, rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect(), targets.to_vec())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }
}

/// Mean squared error of the network over the batch. Rows are summed in the
/// same fixed chunks as [`mse_and_gradient`], so both report bit-identical
/// losses.
pub fn batch_mse(t: &Topology, params: &[f64], batch: &Batch, jobs: Jobs) -> f64 {
    if batch.is_empty() {
        return f64::NAN;
    }
    let partials = map_chunks(batch.len(), GRAD_CHUNK_ROWS, jobs, |rows| {
        let mut hidden = vec![0.0; t.hidden];
        let mut loss = 0.0;
        for i in rows {
            let e = forward_with(t, params, batch.row(i), Some(&mut hidden)) - batch.target(i);
            loss += e * e;
        }
        loss
    });
    let mut loss = 0.0;
    for l in partials {
        loss += l;
    }
    loss / batch.len() as f64
}

/// MSE and its exact gradient with respect to the flat parameter vector.
pub fn mse_and_gradient(t: &Topology, params: &[f64], batch: &Batch, jobs: Jobs) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    if batch.dim() != t.inputs {
        return Err(Error::Parameter(format!(
            "batch has {} inputs, network expects {}",
            batch.dim(),
            t.inputs
        )));
    }
    let partials = map_chunks(batch.len(), GRAD_CHUNK_ROWS, jobs, |rows| {
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut hidden = vec![0.0; t.hidden];
        let w2 = &params[t.w2()];
        for i in rows {
            let z = batch.row(i);
            let e = forward_with(t, params, z, Some(&mut hidden)) - batch.target(i);
            loss += e * e;
            // d(e^2)/d out = 2e; scaled by 1/N after the reduction
            let d_out = 2.0 * e;
            grad[t.b2()] += d_out;
            let (w1g, rest) = grad.split_at_mut(t.hidden * t.inputs);
            let (b1g, rest) = rest.split_at_mut(t.hidden);
            let w2g = &mut rest[..t.hidden];
            for k in 0..t.hidden {
                let h = hidden[k];
                w2g[k] += d_out * h;
                let delta = d_out * w2[k] * (1.0 - h * h);
                b1g[k] += delta;
                for (g, x) in w1g[k * t.inputs..(k + 1) * t.inputs].iter_mut().zip(z) {
                    *g += delta * x;
                }
            }
        }
        (loss, grad)
    });
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}
