//! Finite Markov decision processes.
//!
//! A [`TabularMdp`] stores its transition tensor flattened as
//! `T[s][a][s']` in row-major order. States flagged as terminal end an
//! episode once their reward has been collected; their transition rows are
//! self-loops so that every row stays a valid distribution.

mod dp;
pub mod gridworld;
pub(crate) mod rollout;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

pub use dp::{
    expected_reward, policy_transition, value_dp, visitation_dp, visitation_dp_with_tol,
    TransitionMatrix, DEFAULT_DP_TOL,
};
pub use rollout::{read_ndjson, rollout, write_ndjson, Step, Trajectory};

/// Tolerance used when checking that rows are probability distributions.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Reward function in one of the two supported forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", content = "values", rename_all = "snake_case")]
pub enum Reward {
    /// `R[s]`, paid on being in state `s`.
    State(Vec<f64>),
    /// `R[s][a]`, flattened row-major.
    StateAction(Vec<f64>),
}

impl Reward {
    pub fn is_state_based(&self) -> bool {
        matches!(self, Reward::State(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Reward,
    discount: f64,
    initial_dist: Vec<f64>,
    terminal: Vec<bool>,
}

/// On-disk JSON layout of a [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    transition: Vec<f64>,
    reward: Reward,
    initial_dist: Vec<f64>,
    #[serde(default)]
    terminal: Vec<bool>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let terminal = if doc.terminal.is_empty() {
            vec![false; doc.n_states]
        } else {
            doc.terminal
        };
        TabularMdp::new(
            doc.n_states,
            doc.n_actions,
            doc.transition,
            doc.reward,
            doc.discount,
            doc.initial_dist,
            terminal,
        )
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(m: TabularMdp) -> Self {
        MdpDocument {
            n_states: m.n_states,
            n_actions: m.n_actions,
            discount: m.discount,
            transition: m.transition,
            reward: m.reward,
            initial_dist: m.initial_dist,
            terminal: m.terminal,
        }
    }
}

fn check_simplex(row: &[f64], what: impl FnOnce() -> String) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidDistribution(format!("{} (sum {sum})", what())));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Reward,
        discount: f64,
        initial_dist: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("MDP needs at least one state and one action"));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(shape(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        let reward_len = match &reward {
            Reward::State(r) => (r.len(), n_states),
            Reward::StateAction(r) => (r.len(), n_states * n_actions),
        };
        if reward_len.0 != reward_len.1 {
            return Err(shape(format!(
                "reward has {} entries, expected {}",
                reward_len.0, reward_len.1
            )));
        }
        let finite = match &reward {
            Reward::State(r) | Reward::StateAction(r) => r.iter().all(|x| x.is_finite()),
        };
        if !finite {
            return Err(invalid("rewards must be finite"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(invalid(format!("discount {discount} outside [0, 1)")));
        }
        if initial_dist.len() != n_states || terminal.len() != n_states {
            return Err(shape("initial distribution and terminal flags need one entry per state"));
        }
        check_simplex(&initial_dist, || "initial distribution".into())?;
        for s in 0..n_states {
            for a in 0..n_actions {
                let start = (s * n_actions + a) * n_states;
                check_simplex(&transition[start..start + n_states], || {
                    format!("transition row T[{s}][{a}]")
                })?;
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            initial_dist,
            terminal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self) -> &Reward {
        &self.reward
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_flags(&self) -> &[bool] {
        &self.terminal
    }

    /// `T[s][a][·]`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }

    /// Immediate reward for taking `a` in `s`.
    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        match &self.reward {
            Reward::State(r) => r[s],
            Reward::StateAction(r) => r[s * self.n_actions + a],
        }
    }

    /// Same MDP with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(invalid(format!("discount {discount} outside [0, 1)")));
        }
        Ok(Self { discount, ..self.clone() })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Mixes every intended move with a uniformly random action's move.
///
/// `T_eps[s][a] = (1 - eps) * T[s][a] + eps * mean_b T[s][b]`.
pub fn apply_stochasticity(mdp: &TabularMdp, eps: f64) -> Result<TabularMdp> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(invalid(format!("stochasticity {eps} outside [0, 1]")));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut transition = mdp.transition.clone();
    if eps > 0.0 {
        for s in 0..ns {
            let mut mean = vec![0.0; ns];
            for a in 0..na {
                for (m, p) in mean.iter_mut().zip(mdp.transition_row(s, a)) {
                    *m += p / na as f64;
                }
            }
            for a in 0..na {
                let start = (s * na + a) * ns;
                for (t, (&p, &m)) in transition[start..start + ns]
                    .iter_mut()
                    .zip(mdp.transition_row(s, a).iter().zip(&mean))
                {
                    *t = (1.0 - eps) * p + eps * m;
                }
            }
        }
    }
    TabularMdp::new(
        ns,
        na,
        transition,
        mdp.reward.clone(),
        mdp.discount,
        mdp.initial_dist.clone(),
        mdp.terminal.clone(),
    )
}

/// Per-state action distributions `pi[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(shape(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            check_simplex(&probs[s * n_actions..(s + 1) * n_actions], || {
                format!("policy row pi[{s}]")
            })?;
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One-hot policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(invalid(format!("action {a} out of range in state {s}")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self { n_states: actions.len(), n_actions, probs })
    }

    /// Rows drawn from a flat Dirichlet-like distribution (normalized uniforms).
    pub fn random(n_states: usize, n_actions: usize, rng: &mut crate::rng::Rng) -> Self {
        use rand::Rng as _;
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            let row: Vec<f64> = (0..n_actions).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let sum: f64 = row.iter().sum();
            probs.extend(row.iter().map(|x| x / sum));
        }
        Self { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(shape(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}
