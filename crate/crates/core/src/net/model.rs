//! Trained model and its JSON file format.
//!
//! ```text
//! {
//!   "format": "nriqa-model",
//!   "format_version": 1,
//!   "topology": { "inputs": 27, "hidden": 30, "outputs": 1 },
//!   "hidden_activation": "tanh",
//!   "output_activation": "identity",
//!   "parameter_count": 871,
//!   "parameters": [ w1 (hidden x inputs, row-major), b1, w2, b2 ],
//!   "normalization": { "mean": [...], "std": [...] },
//!   "meta": { ... }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle
//! reproduces every parameter exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{mse_and_gradient, Batch, Network, Topology, DEFAULT_PARAM_COUNT};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::features::{NormalizationStats, FEATURE_LAYOUT_VERSION};
use crate::gradient::GradientConfig;
use crate::par::Jobs;

pub const MODEL_FORMAT: &str = "nriqa-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
}

/// Settings a model depends on, echoed into the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMeta {
    pub feature_layout_version: u32,
    pub gradient: GradientConfig,
    /// Intensity range features were computed on.
    pub intensity_range: String,
    pub train: Option<TrainConfig>,
    /// What the targets mean, e.g. `dmos` (higher is worse) or
    /// `proxy_severity`.
    pub target_convention: String,
    /// Paths of the held-out test rows, when training came from files.
    pub held_out: Vec<String>,
}

impl Default for ModelMeta {
    fn default() -> Self {
        Self {
            feature_layout_version: FEATURE_LAYOUT_VERSION,
            gradient: GradientConfig::default(),
            intensity_range: "unit".into(),
            train: None,
            target_convention: "unspecified".into(),
            held_out: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub network: Network,
    pub norm: NormalizationStats,
    pub meta: ModelMeta,
}

impl NetworkModel {
    pub fn new(network: Network, norm: NormalizationStats, meta: ModelMeta) -> Result<Self> {
        let t = network.topology();
        if norm.mean.len() != t.inputs || norm.std.len() != t.inputs {
            return Err(Error::Consistency(format!(
                "normalization has {} entries, network has {} inputs",
                norm.mean.len(),
                t.inputs
            )));
        }
        if norm.std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::Consistency("normalization std must be positive".into()));
        }
        Ok(Self { network, norm, meta })
    }

    pub fn topology(&self) -> Topology {
        self.network.topology()
    }

    /// Normalizes `raw` with the stored statistics and runs the network.
    pub fn forward(&self, raw: &[f64]) -> Result<f64> {
        let t = self.topology();
        if raw.len() != t.inputs {
            return Err(Error::Input(format!("expected {} features, got {}", t.inputs, raw.len())));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature".into()));
        }
        Ok(self.network.forward(&self.norm.apply(raw)))
    }

    /// MSE over `(raw features, target)` rows and its gradient with respect
    /// to the flat parameters.
    pub fn loss_and_gradient<R: AsRef<[f64]>>(&self, batch: &[(R, f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Parameter("empty batch".into()));
        }
        let rows: Vec<Vec<f64>> = batch.iter().map(|(r, _)| self.norm.apply(r.as_ref())).collect();
        let targets: Vec<f64> = batch.iter().map(|(_, t)| *t).collect();
        let b = Batch::from_rows(&rows, &targets)?;
        mse_and_gradient(&self.topology(), self.network.params(), &b, Jobs::SEQUENTIAL)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let t = self.topology();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            format_version: MODEL_FORMAT_VERSION,
            topology: TopologyRecord {
                inputs: t.inputs,
                hidden: t.hidden,
                outputs: 1,
            },
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::Identity,
            parameter_count: t.param_count(),
            parameters: self.network.params().to_vec(),
            normalization: self.norm.clone(),
            meta: self.meta.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::malformed(path, e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))?;
        if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::malformed(path, "not an nriqa model file"));
        }
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Version(format!(
                    "model format version {v}, this build reads {MODEL_FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::malformed(path, "missing format_version")),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::malformed(path, e.to_string()))?;
        if file.meta.feature_layout_version != FEATURE_LAYOUT_VERSION {
            return Err(Error::Version(format!(
                "model expects feature layout {}, this build extracts {FEATURE_LAYOUT_VERSION}",
                file.meta.feature_layout_version
            )));
        }
        if file.topology.outputs != 1 {
            return Err(Error::Consistency("only single-output networks are supported".into()));
        }
        let topology = Topology {
            inputs: file.topology.inputs,
            hidden: file.topology.hidden,
        };
        let expected = topology.param_count();
        if topology == Topology::default() && file.parameters.len() != DEFAULT_PARAM_COUNT {
            return Err(Error::Consistency(format!(
                "27-30-1 network has {DEFAULT_PARAM_COUNT} parameters, file holds {}",
                file.parameters.len()
            )));
        }
        if file.parameter_count != expected || file.parameters.len() != expected {
            return Err(Error::Consistency(format!(
                "topology needs {expected} parameters; header says {}, file holds {}",
                file.parameter_count,
                file.parameters.len()
            )));
        }
        let network = Network::from_params(topology, file.parameters)?;
        NetworkModel::new(network, file.normalization, file.meta)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyRecord {
    inputs: usize,
    hidden: usize,
    outputs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    format_version: u32,
    topology: TopologyRecord,
    hidden_activation: HiddenActivation,
    output_activation: OutputActivation,
    parameter_count: usize,
    parameters: Vec<f64>,
    normalization: NormalizationStats,
    meta: ModelMeta,
}
