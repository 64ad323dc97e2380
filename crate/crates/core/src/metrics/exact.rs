use super::MetricKind;
use crate::error::Result;
use crate::mdp::{policy_transition, value_dp, visitation_dp, TabularMdp, TabularPolicy, DEFAULT_DP_TOL};

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Mean over all `(s, a)` entries of `|pi1[s][a] - pi2[s][a]|`.
pub fn d_pi_exact(mdp: &TabularMdp, pi1: &TabularPolicy, pi2: &TabularPolicy) -> Result<f64> {
    pi1.check_compatible(mdp)?;
    pi2.check_compatible(mdp)?;
    Ok(mean_abs_diff(pi1.probs(), pi2.probs()))
}

/// Mean over all `(s, s')` entries of `|P^pi1 - P^pi2|`.
pub fn d_ppi_exact(mdp: &TabularMdp, pi1: &TabularPolicy, pi2: &TabularPolicy) -> Result<f64> {
    let p1 = policy_transition(mdp, pi1)?;
    let p2 = policy_transition(mdp, pi2)?;
    Ok(mean_abs_diff(p1.as_slice(), p2.as_slice()))
}

/// Mean over states of `|V^pi1[s] - V^pi2[s]|`.
pub fn d_vpi_exact(mdp: &TabularMdp, pi1: &TabularPolicy, pi2: &TabularPolicy) -> Result<f64> {
    let v1 = value_dp(mdp, pi1, DEFAULT_DP_TOL)?;
    let v2 = value_dp(mdp, pi2, DEFAULT_DP_TOL)?;
    Ok(mean_abs_diff(&v1, &v2))
}

/// Mean over states of `|d^pi1[s] - d^pi2[s]|`.
pub fn d_dpi_exact(mdp: &TabularMdp, pi1: &TabularPolicy, pi2: &TabularPolicy) -> Result<f64> {
    let d1 = visitation_dp(mdp, pi1)?;
    let d2 = visitation_dp(mdp, pi2)?;
    Ok(mean_abs_diff(&d1, &d2))
}

/// `|rho0 . V^pi1 - rho0 . V^pi2|`.
pub fn d_jpi_exact(mdp: &TabularMdp, pi1: &TabularPolicy, pi2: &TabularPolicy) -> Result<f64> {
    let v1 = value_dp(mdp, pi1, DEFAULT_DP_TOL)?;
    let v2 = value_dp(mdp, pi2, DEFAULT_DP_TOL)?;
    let rho = mdp.initial_dist();
    let j = |v: &[f64]| rho.iter().zip(v).map(|(p, x)| p * x).sum::<f64>();
    Ok((j(&v1) - j(&v2)).abs())
}

pub fn exact_metric(kind: MetricKind, mdp: &TabularMdp, pi1: &TabularPolicy, pi2: &TabularPolicy) -> Result<f64> {
    match kind {
        MetricKind::DistIrrel => d_pi_exact(mdp, pi1, pi2),
        MetricKind::InflIrrel => d_ppi_exact(mdp, pi1, pi2),
        MetricKind::ValueIrrel => d_vpi_exact(mdp, pi1, pi2),
        MetricKind::VisitIrrel => d_dpi_exact(mdp, pi1, pi2),
        MetricKind::ReturnIrrel => d_jpi_exact(mdp, pi1, pi2),
    }
}
