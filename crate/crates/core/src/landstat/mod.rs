//! Landscape statistics, predictive-interval coverage and likelihood
//! surfaces.

mod coverage;
mod rbf;
mod stats;

pub use coverage::{
    coverage, evaluate_truth, percentile, CompletionSampler, CoverageReport, CoverageRow,
    TruthOutcome, DEFAULT_PERCENTILES, DEFAULT_TEMPERATURES,
};
pub use rbf::{rbf_interpolate, GridSpec, RbfSurface};
pub use stats::{
    adjacency, edge_count, entropy, modal_proportion, patch_count, Statistic, StatisticVector,
};
