//! No-reference image quality assessment from natural-scene statistics.
//!
//! An image is reduced to 27 features: gradient-map variances at three
//! scales ([`gradient`]), and distribution fits of MSCN coefficients and
//! their neighbor products ([`mscn`], [`fit`]). A small tanh network trained
//! with scaled conjugate gradient ([`net`]) maps the normalized features to a
//! quality score. [`eval`] computes rank/linear correlations against
//! subjective scores and [`distort`] synthesizes graded test datasets.

pub mod distort;
pub mod error;
pub mod eval;
pub mod features;
pub mod fit;
pub mod gradient;
pub mod mscn;
pub mod net;
pub mod par;
pub mod raster;
pub mod seed;

pub use error::{Error, Result};
pub use features::{extract_features, FeatureConfig, FeatureVector, NormalizationStats};
pub use net::{NetworkModel, TrainConfig};
pub use raster::{load_grayscale, GrayPlane};
