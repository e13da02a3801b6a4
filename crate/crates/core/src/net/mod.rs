//! The 27-30-1 regressor: forward pass, backpropagation, scaled conjugate
//! gradient training and model files.

mod model;
mod network;
mod scg;
mod train;

pub use model::{HiddenActivation, ModelMeta, NetworkModel, OutputActivation, MODEL_FORMAT_VERSION};
pub use network::{batch_mse, mse_and_gradient, Batch, Network, Topology, DEFAULT_HIDDEN, DEFAULT_PARAM_COUNT};
pub use scg::{Objective, Scg, ScgSettings, StepReport};
pub use train::{
    split_rows, train_scg, train_scg_grouped, DataSplit, EpochRecord, SplitMode, StopReason, TrainConfig,
    TrainHistory, MIN_TRAIN_ROWS,
};
