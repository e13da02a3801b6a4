//! Correlation metrics, dataset manifests and evaluation reports.

pub mod correlation;
pub mod live;
pub mod manifest;
mod matfile;
pub mod report;

pub use correlation::{correlations, fractional_ranks, kendall_tau_b, kendall_tau_b_naive, pearson, spearman, Correlations};
pub use live::ingest_live_r2;
pub use manifest::{DatasetManifest, DistortionClass, ManifestRecord};
pub use matfile::{parse_mat, MatArray};
pub use report::{evaluate, evaluate_with_held_out, score_manifest, EvaluationReport, GroupStats, Prediction};
