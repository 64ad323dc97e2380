use super::MetricKind;
use crate::error::{invalid, Error, Result};
use crate::mdp::{TabularMdp, Trajectory};

/// Additive pseudo-count applied to every symbol before normalizing.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

fn frequencies(samples: &[usize], support: usize, smoothing: f64) -> Result<Vec<f64>> {
    let mut counts = vec![smoothing; support];
    for &s in samples {
        if s >= support {
            return Err(invalid(format!("symbol {s} outside support of size {support}")));
        }
        counts[s] += 1.0;
    }
    let total = samples.len() as f64 + smoothing * support as f64;
    Ok(counts.into_iter().map(|c| c / total).collect())
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| if qi > 0.0 { pi * (pi / qi).ln() } else { f64::INFINITY })
        .sum()
}

/// Symmetrized KL divergence between the smoothed empirical distributions of
/// two symbol streams over `0..support`.
pub fn jeffreys_divergence(samples1: &[usize], samples2: &[usize], support: usize, smoothing: f64) -> Result<f64> {
    if samples1.is_empty() || samples2.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    if support == 0 || !(smoothing >= 0.0) {
        return Err(invalid("support must be nonempty and smoothing non-negative"));
    }
    let p = frequencies(samples1, support, smoothing)?;
    let q = frequencies(samples2, support, smoothing)?;
    Ok(kl(&p, &q) + kl(&q, &p))
}

/// Maps trajectories to symbols of the joint each metric compares.
///
/// `(s, a)` for action distributions, `(s, s')` for influence, `(s, G-bin)`
/// for values, `s` for visitation and `G_0-bin` for returns. Returns are
/// binned into `return_bins` equal-width bins over `return_range`.
pub fn symbols_for(
    kind: MetricKind,
    trajectories: &[Trajectory],
    n_states: usize,
    n_actions: usize,
    return_bins: usize,
    return_range: (f64, f64),
) -> Result<(Vec<usize>, usize)> {
    if return_bins == 0 {
        return Err(invalid("return_bins must be positive"));
    }
    let (lo, hi) = return_range;
    let width = (hi - lo).max(f64::MIN_POSITIVE);
    let bin = |g: f64| (((g - lo) / width * return_bins as f64).floor().max(0.0) as usize).min(return_bins - 1);
    let steps = trajectories.iter().flat_map(|t| t.steps.iter().zip(&t.returns));
    Ok(match kind {
        MetricKind::DistIrrel => (steps.map(|(st, _)| st.state * n_actions + st.action).collect(), n_states * n_actions),
        MetricKind::InflIrrel => (steps.map(|(st, _)| st.state * n_states + st.next_state).collect(), n_states * n_states),
        MetricKind::ValueIrrel => (steps.map(|(st, &g)| st.state * return_bins + bin(g)).collect(), n_states * return_bins),
        MetricKind::VisitIrrel => (steps.map(|(st, _)| st.state).collect(), n_states),
        MetricKind::ReturnIrrel => (
            trajectories.iter().filter_map(|t| t.returns.first().map(|&g| bin(g))).collect(),
            return_bins,
        ),
    })
}

/// Jeffreys-divergence estimate of a policy metric from sampled episodes of
/// two policies on the same MDP.
pub fn jeffreys_metric(
    episodes1: &[Trajectory],
    episodes2: &[Trajectory],
    kind: MetricKind,
    mdp: &TabularMdp,
    return_bins: usize,
    smoothing: f64,
) -> Result<f64> {
    let pooled = episodes1.iter().chain(episodes2).flat_map(|t| t.returns.iter().copied());
    let (lo, hi) = pooled.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)));
    if !lo.is_finite() {
        return Err(Error::Empty("episode set"));
    }
    let (s1, support) = symbols_for(kind, episodes1, mdp.n_states(), mdp.n_actions(), return_bins, (lo, hi))?;
    let (s2, _) = symbols_for(kind, episodes2, mdp.n_states(), mdp.n_actions(), return_bins, (lo, hi))?;
    jeffreys_divergence(&s1, &s2, support, smoothing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from, sample_categorical};

    #[test]
    fn identical_multisets() {
        let a = [0, 1, 1, 2, 2, 2];
        let b = [2, 1, 2, 0, 2, 1];
        assert_eq!(jeffreys_divergence(&a, &b, 3, DEFAULT_SMOOTHING).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_two_symbol_case() {
        // p = (0.75, 0.25), q = (0.25, 0.75): each KL is 0.5 ln 3
        let a = [0, 0, 0, 1];
        let b = [0, 1, 1, 1];
        let j = jeffreys_divergence(&a, &b, 2, 0.0).unwrap();
        assert!((j - 3f64.ln()).abs() < 1e-12);
        assert!((j - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn consistent_for_same_distribution() {
        let mut rng = rng_from(17);
        let w = [0.1, 0.2, 0.3, 0.4];
        let a: Vec<usize> = (0..10_000).map(|_| sample_categorical(&mut rng, &w)).collect();
        let b: Vec<usize> = (0..10_000).map(|_| sample_categorical(&mut rng, &w)).collect();
        assert!(jeffreys_divergence(&a, &b, 4, DEFAULT_SMOOTHING).unwrap() < 0.05);
    }

    #[test]
    fn empty_and_out_of_support() {
        assert!(matches!(jeffreys_divergence(&[], &[0], 1, 0.0), Err(Error::Empty(_))));
        assert!(jeffreys_divergence(&[3], &[0], 2, 0.0).is_err());
    }

    #[test]
    fn disjoint_support_without_smoothing_is_infinite() {
        assert!(jeffreys_divergence(&[0], &[1], 2, 0.0).unwrap().is_infinite());
        assert!(jeffreys_divergence(&[0], &[1], 2, DEFAULT_SMOOTHING).unwrap().is_finite());
    }
}
