//! Policy optimization experiments regularized by policy metrics.

mod curve;
pub mod es;
pub mod trpo;

pub use curve::{auc, CurvePoint};
pub use es::{centered_ranks, dges_run, dges_run_observed, EsConfig, EsRun, GenerationLog};
pub use trpo::{sigma_grid, trpo_run, trpo_run_observed, MetricEstimator, TrpoRun, TrustRegionConfig, UpdateLog};
