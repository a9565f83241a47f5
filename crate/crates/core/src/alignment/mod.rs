//! Brain-alignment benchmarks.
//!
//! Model features are scored against stimulus × channel response matrices
//! with cross-validated ridge predictivity, linear CKA, or RDM similarity;
//! raw scores are divided by a cross-subject consistency ceiling.

mod benchmark;
mod consistency;
mod control;
mod dataset;
mod predictivity;

pub use benchmark::{
    aggregate_scores, baseline_features, contextualize, normalize_score, run_benchmark, stimulus_features,
    score_features, BaselineFeatures, BenchmarkResult, ConsistencyCache, ContextualizedStimulus, FeatureModel,
};
pub use consistency::{balanced_bipartitions, consistency_linear, consistency_splithalf, metric_score};
pub use control::{apply_control, ControlCondition};
pub use dataset::{DatasetManifest, Stimulus, StimulusResponseDataset};
pub use predictivity::{
    cka_benchmark, default_lambda_grid, fold_ranges, linear_predictivity, rdm_benchmark, FoldScore, Metric,
    PredictivityOptions, PredictivityResult,
};
