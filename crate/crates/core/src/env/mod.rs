//! Environments that dense-network policies act in.
//!
//! Discrete environments read the network output as action probabilities
//! (softmax head); continuous ones read it as the action itself, clipped to
//! the unit box.

mod grid;
mod point;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::rollout::discounted_returns;
use crate::nn::DenseNet;
use crate::rng::Rng;

pub use grid::GridEnv;
pub use point::{PointEnv, PointEnvParams, POINT_ACTION_DIM, POINT_STATE_DIM};

/// One transition with states and actions encoded as real vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStep {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<EnvStep>,
    /// Discounted return-to-go at every step.
    pub returns: Vec<f64>,
}

impl Episode {
    pub fn new(steps: Vec<EnvStep>, discount: f64) -> Self {
        let returns = discounted_returns(steps.iter().map(|s| s.reward), discount);
        Self { steps, returns }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Discounted return from the first step.
    pub fn initial_return(&self) -> f64 {
        self.returns.first().copied().unwrap_or(0.0)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

pub trait Env: Send + Sync {
    fn state_dim(&self) -> usize;
    /// Width of the encoded action (one-hot width for discrete actions).
    fn action_dim(&self) -> usize;
    fn is_discrete(&self) -> bool;
    fn horizon(&self) -> usize;
    fn discount(&self) -> f64;
    /// Samples one episode of `policy`.
    fn rollout(&self, policy: &DenseNet, rng: &mut Rng) -> Result<Episode>;
}

pub fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
