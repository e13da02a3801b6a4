use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelMeta, NetworkModel};
use super::network::{batch_mse, mse_and_gradient, Batch, Network, Topology, DEFAULT_HIDDEN};
use super::scg::{Objective, Scg, ScgSettings};
use crate::error::{Error, Result};
use crate::features::{fit_normalizer, NormalizationStats};
use crate::par::Jobs;
use crate::seed::derive_seed;

pub const MIN_TRAIN_ROWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Rows are shuffled individually.
    #[default]
    Random,
    /// Rows sharing a reference id stay in the same split.
    #[serde(alias = "content-disjoint")]
    ContentDisjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub max_validation_failures: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub hidden: usize,
    pub min_grad_norm: f64,
    pub split: SplitMode,
    pub scg: ScgSettings,
    #[serde(skip)]
    pub jobs: Jobs,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 2000,
            max_validation_failures: 6,
            train_fraction: 0.70,
            validation_fraction: 0.15,
            test_fraction: 0.15,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            min_grad_norm: 1e-10,
            split: SplitMode::Random,
            scg: ScgSettings::default(),
            jobs: Jobs::ALL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.validation_fraction, self.test_fraction];
        if fr.iter().any(|f| f.is_nan() || *f <= 0.0) {
            return Err(Error::Config("split fractions must be positive".into()));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split fractions must sum to 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden layer needs at least one unit".into()));
        }
        if [self.scg.sigma, self.scg.lambda_init].iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::Config("scg sigma and lambda_init must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    MinGradient,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
            StopReason::MinGradient => "min_gradient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub test_mse: f64,
    pub grad_norm: f64,
}

/// Row indices (into the caller's data) of each split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were returned; 0 until an epoch completes.
    pub best_epoch: usize,
    pub stop_reason: Option<StopReason>,
    pub split: DataSplit,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }
}

/// Shuffles row indices with `seed` and cuts them by the configured
/// fractions. With `groups`, whole groups are assigned to one split.
pub fn split_rows(n: usize, groups: Option<&[String]>, cfg: &TrainConfig) -> Result<DataSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "split"));
    let n_train = (n as f64 * cfg.train_fraction).round() as usize;
    let n_val = (n as f64 * cfg.validation_fraction).round() as usize;
    let split = match (cfg.split, groups) {
        (SplitMode::ContentDisjoint, Some(groups)) => {
            if groups.len() != n {
                return Err(Error::Dataset("one reference id per row is required".into()));
            }
            let mut ids: Vec<&String> = groups.iter().collect();
            ids.sort();
            ids.dedup();
            ids.shuffle(&mut rng);
            let mut split = DataSplit::default();
            for id in ids {
                let rows = (0..n).filter(|&i| &groups[i] == id);
                let bucket = if split.train.len() < n_train {
                    &mut split.train
                } else if split.validation.len() < n_val {
                    &mut split.validation
                } else {
                    &mut split.test
                };
                bucket.extend(rows);
            }
            split
        }
        (SplitMode::ContentDisjoint, None) => {
            return Err(Error::Dataset("content-disjoint split needs reference ids".into()))
        }
        (SplitMode::Random, _) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            DataSplit {
                train: idx[..n_train].to_vec(),
                validation: idx[n_train..n_train + n_val].to_vec(),
                test: idx[n_train + n_val..].to_vec(),
            }
        }
    };
    if split.train.len() < 2 || split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::Dataset(format!(
            "split produced {}/{}/{} rows; every split needs data",
            split.train.len(),
            split.validation.len(),
            split.test.len()
        )));
    }
    Ok(split)
}

struct TrainObjective<'a> {
    topology: Topology,
    batch: &'a Batch,
    jobs: Jobs,
}

impl Objective for TrainObjective<'_> {
    fn dim(&self) -> usize {
        self.topology.param_count()
    }

    fn evaluate(&self, w: &[f64]) -> (f64, Vec<f64>) {
        mse_and_gradient(&self.topology, w, self.batch, self.jobs).expect("validated batch")
    }

    fn loss(&self, w: &[f64]) -> f64 {
        batch_mse(&self.topology, w, self.batch, self.jobs)
    }
}

fn subset_batch(rows: &[Vec<f64>], targets: &[f64], idx: &[usize], dim: usize) -> Result<Batch> {
    let inputs = idx.iter().flat_map(|&i| rows[i].iter().copied()).collect();
    Batch::new(dim, inputs, idx.iter().map(|&i| targets[i]).collect())
}

/// Trains with a random-row split.
pub fn train_scg<R: AsRef<[f64]>>(
    features: &[R],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<(NetworkModel, TrainHistory)> {
    train_scg_grouped(features, targets, None, cfg)
}

/// Full-batch SCG training with validation-based early stopping. The
/// returned model holds the weights of the best validation epoch and the
/// normalizer fitted on the training split.
pub fn train_scg_grouped<R: AsRef<[f64]>>(
    features: &[R],
    targets: &[f64],
    groups: Option<&[String]>,
    cfg: &TrainConfig,
) -> Result<(NetworkModel, TrainHistory)> {
    cfg.validate()?;
    let n = features.len();
    if n < MIN_TRAIN_ROWS {
        return Err(Error::Dataset(format!("need at least {MIN_TRAIN_ROWS} rows, got {n}")));
    }
    if targets.len() != n {
        return Err(Error::Dataset(format!("{n} feature rows but {} targets", targets.len())));
    }
    let dim = features[0].as_ref().len();
    if dim == 0 || features.iter().any(|r| r.as_ref().len() != dim) {
        return Err(Error::Dataset("feature rows have inconsistent lengths".into()));
    }
    if features.iter().any(|r| r.as_ref().iter().any(|v| !v.is_finite()))
        || targets.iter().any(|t| !t.is_finite())
    {
        return Err(Error::Dataset("non-finite feature or target".into()));
    }

    let split = split_rows(n, groups, cfg)?;
    let train_rows: Vec<&[f64]> = split.train.iter().map(|&i| features[i].as_ref()).collect();
    let norm: NormalizationStats = fit_normalizer(&train_rows)?;
    let normalized: Vec<Vec<f64>> = features.iter().map(|r| norm.apply(r.as_ref())).collect();
    let train = subset_batch(&normalized, targets, &split.train, dim)?;
    let validation = subset_batch(&normalized, targets, &split.validation, dim)?;
    let test = subset_batch(&normalized, targets, &split.test, dim)?;

    let topology = Topology {
        inputs: dim,
        hidden: cfg.hidden,
    };
    let init = Network::init(topology, derive_seed(cfg.seed, "init"));
    let objective = TrainObjective {
        topology,
        batch: &train,
        jobs: cfg.jobs,
    };
    let mut scg = Scg::new(&objective, init.params().to_vec(), cfg.scg);

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stop_reason: None,
        split,
    };
    let mut best_params = init.params().to_vec();
    let mut best_val = f64::INFINITY;
    let mut failures = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let report = scg.step(&objective);
        let w = scg.weights();
        let record = EpochRecord {
            epoch,
            train_mse: report.loss,
            validation_mse: batch_mse(&topology, w, &validation, cfg.jobs),
            test_mse: batch_mse(&topology, w, &test, cfg.jobs),
            grad_norm: report.grad_norm,
        };
        history.epochs.push(record);
        if !record.train_mse.is_finite() || !record.validation_mse.is_finite() {
            return Err(Error::Divergence {
                epoch,
                history: Box::new(history),
            });
        }
        if record.validation_mse < best_val {
            best_val = record.validation_mse;
            best_params.copy_from_slice(w);
            history.best_epoch = epoch;
            failures = 0;
        } else {
            failures += 1;
        }
        if failures >= cfg.max_validation_failures {
            history.stop_reason = Some(StopReason::EarlyStop);
            break;
        }
        if record.grad_norm < cfg.min_grad_norm {
            history.stop_reason = Some(StopReason::MinGradient);
            break;
        }
    }
    if history.stop_reason.is_none() {
        history.stop_reason = Some(StopReason::MaxEpochs);
    }

    let network = Network::from_params(topology, best_params)?;
    let meta = ModelMeta {
        train: Some(cfg.clone()),
        ..ModelMeta::default()
    };
    Ok((NetworkModel::new(network, norm, meta)?, history))
}
