//! Policy metrics: exact tabular forms, the Jeffreys-divergence estimator,
//! and equivalence (fineness) checks.

mod exact;
mod fineness;
mod jeffreys;

use serde::{Deserialize, Serialize};

pub use exact::{d_dpi_exact, d_jpi_exact, d_pi_exact, d_ppi_exact, d_vpi_exact, exact_metric};
pub use fineness::{fineness_oracle, FinenessFlags, EQUIVALENCE_TOL};
pub use jeffreys::{jeffreys_divergence, jeffreys_metric, symbols_for, DEFAULT_SMOOTHING};

/// Which policy feature a metric compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    /// Action distributions, `d_pi`.
    #[serde(rename = "pi")]
    DistIrrel,
    /// Policy-induced transition kernels, `d_{P^pi}`.
    #[serde(rename = "ppi")]
    InflIrrel,
    /// Values (or return distributions), `d_{V^pi}`.
    #[serde(rename = "vpi")]
    ValueIrrel,
    /// Discounted state visitation, `d_{d^pi}`.
    #[serde(rename = "dpi")]
    VisitIrrel,
    /// Expected return from the initial distribution, `d_{J^pi}`.
    #[serde(rename = "jpi")]
    ReturnIrrel,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::DistIrrel,
        MetricKind::InflIrrel,
        MetricKind::ValueIrrel,
        MetricKind::VisitIrrel,
        MetricKind::ReturnIrrel,
    ];

    /// Kinds with a sample-based (MMD) estimator.
    pub const ESTIMABLE: [MetricKind; 3] =
        [MetricKind::DistIrrel, MetricKind::InflIrrel, MetricKind::ValueIrrel];

    pub fn short_name(self) -> &'static str {
        match self {
            MetricKind::DistIrrel => "pi",
            MetricKind::InflIrrel => "ppi",
            MetricKind::ValueIrrel => "vpi",
            MetricKind::VisitIrrel => "dpi",
            MetricKind::ReturnIrrel => "jpi",
        }
    }

    pub fn is_estimable(self) -> bool {
        Self::ESTIMABLE.contains(&self)
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.short_name() == s)
            .ok_or_else(|| crate::error::invalid(format!("unknown metric '{s}' (expected pi, ppi, vpi, dpi or jpi)")))
    }
}
