use policy_abstraction::mdp::gridworld::{build_gridworld, reference_policies, GridParams};
use policy_abstraction::metrics::{exact_metric, MetricKind};

use crate::artifacts::{num, OutputDir};
use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// Exact metrics between the two reference policies across the
/// stochasticity sweep, one CSV per environment.
pub fn run(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let g = &cfg.gridworld;
    for &kind in &g.environments {
        let (pi1, pi2) = reference_policies(kind, &g.params)?;
        let mut rows = Vec::new();
        for &eps in &g.epsilons {
            let mdp = build_gridworld(kind, &GridParams { slip: eps, ..g.params.clone() })?;
            for metric in MetricKind::ALL {
                let d = exact_metric(metric, &mdp, &pi1, &pi2)?;
                rows.push(vec![kind.to_string(), num(eps), metric.to_string(), num(d)]);
            }
        }
        out.write_csv(&format!("gridworld_{kind}.csv"), &["environment", "epsilon", "metric", "value"], &rows)?;
    }
    Ok(())
}
