use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{TabularMdp, TabularPolicy};
use crate::error::{shape, Result};
use crate::rng::{rng_from, sample_categorical};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// A sampled episode with per-step discounted returns-to-go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub discount: f64,
    pub steps: Vec<Step>,
    pub returns: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory, filling `G_t = r_t + gamma * G_{t+1}` backwards.
    pub fn from_steps(steps: Vec<Step>, discount: f64) -> Self {
        let returns = discounted_returns(steps.iter().map(|s| s.reward), discount);
        Self { discount, steps, returns }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

pub(crate) fn discounted_returns(rewards: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator, discount: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut out = vec![0.0; n];
    let mut next: Option<f64> = None;
    for (i, r) in rewards.enumerate().rev() {
        let g = match next {
            Some(g1) => r + discount * g1,
            None => r,
        };
        out[i] = g;
        next = Some(g);
    }
    out
}

/// Samples one episode of at most `horizon` steps.
///
/// The episode ends after the reward of a terminal state is collected; that
/// final step records the terminal state as its own successor.
pub fn rollout(mdp: &TabularMdp, pi: &TabularPolicy, horizon: usize, rng_seed: u64) -> Result<Trajectory> {
    pi.check_compatible(mdp)?;
    if horizon == 0 {
        return Err(shape("rollout horizon must be at least 1"));
    }
    let mut rng = rng_from(rng_seed);
    let mut state = sample_categorical(&mut rng, mdp.initial_dist());
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = sample_categorical(&mut rng, pi.row(state));
        let reward = mdp.reward_at(state, action);
        if mdp.is_terminal(state) {
            steps.push(Step { state, action, reward, next_state: state });
            break;
        }
        let next_state = sample_categorical(&mut rng, mdp.transition_row(state, action));
        steps.push(Step { state, action, reward, next_state });
        state = next_state;
    }
    Ok(Trajectory::from_steps(steps, mdp.discount()))
}

/// Writes one JSON record per trajectory per line.
pub fn write_ndjson<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::gridworld::{build_gridworld, GridKind, GridParams};

    #[test]
    fn returns_recompute_exactly() {
        let steps = vec![
            Step { state: 0, action: 0, reward: 0.3, next_state: 1 },
            Step { state: 1, action: 0, reward: -1.7, next_state: 2 },
            Step { state: 2, action: 0, reward: 2.5, next_state: 2 },
        ];
        let t = Trajectory::from_steps(steps, 0.87);
        assert_eq!(t.returns[2], 2.5);
        for i in 0..2 {
            assert_eq!(t.returns[i], t.steps[i].reward + 0.87 * t.returns[i + 1]);
        }
    }

    #[test]
    fn deterministic_world_ignores_seed() {
        let mdp = build_gridworld(GridKind::DistinctPolicies, &GridParams::default()).unwrap();
        let (pi, _) = crate::mdp::gridworld::reference_policies(GridKind::DistinctPolicies, &GridParams::default()).unwrap();
        let a = rollout(&mdp, &pi, 50, 1).unwrap();
        let b = rollout(&mdp, &pi, 50, 999).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.last().unwrap().reward, 1.0);
    }

    #[test]
    fn ndjson_round_trip() {
        let mdp = build_gridworld(GridKind::Doorway, &GridParams { slip: 0.3, ..GridParams::default() }).unwrap();
        let pi = TabularPolicy::uniform(mdp.n_states(), mdp.n_actions());
        let ts: Vec<_> = (0..3).map(|s| rollout(&mdp, &pi, 20, s).unwrap()).collect();
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &ts).unwrap();
        assert_eq!(buf.iter().filter(|&&c| c == b'\n').count(), 3);
        assert_eq!(read_ndjson(&buf[..]).unwrap(), ts);
    }

    #[test]
    fn zero_horizon_rejected() {
        let mdp = build_gridworld(GridKind::Doorway, &GridParams::default()).unwrap();
        let pi = TabularPolicy::uniform(mdp.n_states(), mdp.n_actions());
        assert!(rollout(&mdp, &pi, 0, 0).is_err());
    }
}
