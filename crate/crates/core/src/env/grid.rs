use rand::Rng as _;

use super::{one_hot, Env, EnvStep, Episode};
use crate::error::{shape, Result};
use crate::mdp::{rollout, TabularMdp, TabularPolicy, Trajectory};
use crate::nn::{Activation, DenseNet, Matrix};
use crate::rng::Rng;

/// A tabular MDP seen through one-hot state and action encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEnv {
    pub mdp: TabularMdp,
    pub horizon: usize,
}

impl GridEnv {
    pub fn new(mdp: TabularMdp, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(crate::error::invalid("horizon must be at least 1"));
        }
        Ok(Self { mdp, horizon })
    }

    /// Action probabilities of `policy` at every state.
    pub fn tabular_policy(&self, policy: &DenseNet) -> Result<TabularPolicy> {
        let arch = policy.architecture();
        let (n_s, n_a) = (self.mdp.n_states(), self.mdp.n_actions());
        if arch.input != n_s || arch.output() != n_a || arch.layers.last().map(|l| l.1) != Some(Activation::Softmax) {
            return Err(shape(format!("policy must map {n_s} one-hot states to a softmax over {n_a} actions")));
        }
        let eye = Matrix::from_rows(&(0..n_s).map(|s| one_hot(s, n_s)).collect::<Vec<_>>())?;
        let probs = policy.predict(&eye)?.into_vec();
        TabularPolicy::new(n_s, n_a, renormalize(probs, n_a))
    }

    pub fn encode(&self, t: &Trajectory) -> Episode {
        let (n_s, n_a) = (self.mdp.n_states(), self.mdp.n_actions());
        let steps = t
            .steps
            .iter()
            .map(|st| EnvStep {
                state: one_hot(st.state, n_s),
                action: one_hot(st.action, n_a),
                reward: st.reward,
                next_state: one_hot(st.next_state, n_s),
            })
            .collect();
        Episode { steps, returns: t.returns.clone() }
    }
}

// Softmax rows sum to 1 only up to rounding; pin them so policy validation holds.
fn renormalize(mut probs: Vec<f64>, n_a: usize) -> Vec<f64> {
    for row in probs.chunks_exact_mut(n_a) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    probs
}

impl Env for GridEnv {
    fn state_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn action_dim(&self) -> usize {
        self.mdp.n_actions()
    }

    fn is_discrete(&self) -> bool {
        true
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn discount(&self) -> f64 {
        self.mdp.discount()
    }

    fn rollout(&self, policy: &DenseNet, rng: &mut Rng) -> Result<Episode> {
        let pi = self.tabular_policy(policy)?;
        let t = rollout(&self.mdp, &pi, self.horizon, rng.random())?;
        Ok(self.encode(&t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::gridworld::{build_gridworld, GridKind, GridParams};
    use crate::nn::Architecture;
    use crate::rng::rng_from;

    #[test]
    fn one_hot_encoding_and_policy_extraction() {
        let mdp = build_gridworld(GridKind::NDirection, &GridParams { length: 4, ..GridParams::default() }).unwrap();
        let env = GridEnv::new(mdp, 25).unwrap();
        let arch = Architecture::mlp(5, &[16, 16], Activation::Tanh, 5, Activation::Softmax).unwrap();
        let net = DenseNet::init(arch, &mut rng_from(1)).unwrap();
        let pi = env.tabular_policy(&net).unwrap();
        assert_eq!(pi.probs().len(), 25);
        let ep = env.rollout(&net, &mut rng_from(2)).unwrap();
        assert!(!ep.is_empty() && ep.len() <= 25);
        for st in &ep.steps {
            assert_eq!(st.state.iter().sum::<f64>(), 1.0);
            assert_eq!(st.action.len(), 5);
        }
    }

    #[test]
    fn rejects_non_softmax_policy() {
        let mdp = build_gridworld(GridKind::Doorway, &GridParams::default()).unwrap();
        let env = GridEnv::new(mdp, 10).unwrap();
        let arch = Architecture::mlp(25, &[], Activation::Tanh, 4, Activation::Tanh).unwrap();
        let net = DenseNet::zeros(arch).unwrap();
        assert!(env.tabular_policy(&net).is_err());
    }
}
