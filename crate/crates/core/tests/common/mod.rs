#![allow(dead_code)]

use policy_abstraction::mdp::{Reward, TabularMdp, TabularPolicy};
use policy_abstraction::rng::Rng;
use rand::Rng as _;

pub fn simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

/// Dense random MDP; `terminal` marks the last state terminal.
pub fn random_mdp(rng: &mut Rng, n: usize, a: usize, state_reward: bool, terminal: bool, discount: f64) -> TabularMdp {
    let transition: Vec<f64> = (0..n * a).flat_map(|_| simplex(rng, n)).collect();
    let reward = if state_reward {
        Reward::State((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    } else {
        Reward::StateAction((0..n * a).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let mut flags = vec![false; n];
    if terminal {
        flags[n - 1] = true;
    }
    TabularMdp::new(n, a, transition, reward, discount, simplex(rng, n), flags).unwrap()
}

pub fn random_policy(rng: &mut Rng, n: usize, a: usize) -> TabularPolicy {
    TabularPolicy::new(n, a, (0..n).flat_map(|_| simplex(rng, a)).collect()).unwrap()
}

pub fn dummy_record(policy: policy_abstraction::nn::DenseNet, mean_return: f64) -> policy_abstraction::record::PolicyRecord {
    use policy_abstraction::mmd::{SampleSet, SampleTag};
    let set = |tag| SampleSet::new(tag, 1, vec![0.0]).unwrap();
    policy_abstraction::record::PolicyRecord {
        policy,
        mean_return,
        episode_returns: vec![mean_return],
        state_action: set(SampleTag::StateAction),
        state_next_state: set(SampleTag::StateNextState),
        state_return: set(SampleTag::StateReturn),
        provenance: Default::default(),
    }
}
