//! Offline policy records: parameters, mean return and sampled joints.

use serde::{Deserialize, Serialize};

use crate::env::{Env, Episode};
use crate::error::{invalid, Error, Result};
use crate::metrics::MetricKind;
use crate::mmd::{estimate_from_samples, MmdConfig, SampleSet, SampleTag};
use crate::nn::DenseNet;
use crate::rng::{derive_seed, rng_from, Rng};

/// Where a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub checkpoint: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub policy: DenseNet,
    /// Mean discounted return from the first step over the collected episodes.
    pub mean_return: f64,
    pub episode_returns: Vec<f64>,
    pub state_action: SampleSet,
    pub state_next_state: SampleSet,
    pub state_return: SampleSet,
    pub provenance: Provenance,
}

/// Pools the `(s, a)`, `(s, s')` and `(s, G)` points of a batch of episodes.
pub fn episode_samples(episodes: &[Episode]) -> Result<(SampleSet, SampleSet, SampleSet)> {
    let first = episodes.iter().flat_map(|e| e.steps.first()).next().ok_or(Error::Empty("episodes"))?;
    let (ds, da) = (first.state.len(), first.action.len());
    let n: usize = episodes.iter().map(Episode::len).sum();
    let (mut sa, mut ss, mut sg) =
        (Vec::with_capacity(n * (ds + da)), Vec::with_capacity(n * 2 * ds), Vec::with_capacity(n * (ds + 1)));
    for e in episodes {
        for (st, &g) in e.steps.iter().zip(&e.returns) {
            sa.extend_from_slice(&st.state);
            sa.extend_from_slice(&st.action);
            ss.extend_from_slice(&st.state);
            ss.extend_from_slice(&st.next_state);
            sg.extend_from_slice(&st.state);
            sg.push(g);
        }
    }
    Ok((
        SampleSet::new(SampleTag::StateAction, ds + da, sa)?,
        SampleSet::new(SampleTag::StateNextState, 2 * ds, ss)?,
        SampleSet::new(SampleTag::StateReturn, ds + 1, sg)?,
    ))
}

impl PolicyRecord {
    /// Builds a record from episodes, keeping at most `m` points per joint.
    pub fn from_episodes(policy: DenseNet, episodes: &[Episode], m: usize, rng: &mut Rng, provenance: Provenance) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Empty("episodes"));
        }
        let episode_returns: Vec<f64> = episodes.iter().map(Episode::initial_return).collect();
        let mean_return = episode_returns.iter().sum::<f64>() / episode_returns.len() as f64;
        if !mean_return.is_finite() {
            return Err(Error::Diverged("non-finite episode return".into()));
        }
        let (sa, ss, sg) = episode_samples(episodes)?;
        let keep = |s: SampleSet, rng: &mut Rng| if s.len() > m { s.subsample(m, rng) } else { Ok(s) };
        Ok(Self {
            policy,
            mean_return,
            episode_returns,
            state_action: keep(sa, rng)?,
            state_next_state: keep(ss, rng)?,
            state_return: keep(sg, rng)?,
            provenance,
        })
    }

    /// Rolls `policy` out `episodes` times and records the result.
    pub fn collect(env: &dyn Env, policy: DenseNet, episodes: usize, m: usize, seed: u64, provenance: Provenance) -> Result<Self> {
        if episodes == 0 {
            return Err(invalid("at least one episode is required"));
        }
        let eps = (0..episodes)
            .map(|e| env.rollout(&policy, &mut rng_from(derive_seed(seed, &[e as u64]))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_episodes(policy, &eps, m, &mut rng_from(derive_seed(seed, &[u64::MAX])), provenance)
    }

    pub fn samples(&self, tag: SampleTag) -> &SampleSet {
        match tag {
            SampleTag::StateAction => &self.state_action,
            SampleTag::StateNextState => &self.state_next_state,
            SampleTag::StateReturn => &self.state_return,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Range of the sampled returns across a dataset.
pub fn return_range(records: &[PolicyRecord]) -> Option<(f64, f64)> {
    let mut it = records.iter().flat_map(|r| r.state_return.points().map(|p| p[p.len() - 1])).peekable();
    it.peek()?;
    Some(it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g))))
}

/// Estimated squared MMD between the `kind`-matching joints of two records.
pub fn estimate_metric(ri: &PolicyRecord, rj: &PolicyRecord, kind: MetricKind, cfg: &MmdConfig, seed: u64) -> Result<f64> {
    let tag = SampleTag::for_metric(kind)?;
    estimate_from_samples(ri.samples(tag), rj.samples(tag), cfg, seed)
}
