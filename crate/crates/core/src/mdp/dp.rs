use super::{Reward, TabularMdp, TabularPolicy};
use crate::error::{Error, Result};

/// Default sup-norm tolerance for the iterative solvers.
pub const DEFAULT_DP_TOL: f64 = 1e-10;

const MAX_ITERS: usize = 1_000_000;

/// Row-stochastic `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.data[s * self.n + t]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n..(s + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `P^pi[s][s'] = sum_a pi[s][a] * T[s][a][s']`.
pub fn policy_transition(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<TransitionMatrix> {
    pi.check_compatible(mdp)?;
    let n = mdp.n_states();
    let mut data = vec![0.0; n * n];
    for s in 0..n {
        let out = &mut data[s * n..(s + 1) * n];
        for (a, &p) in pi.row(s).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(mdp.transition_row(s, a)) {
                *o += p * t;
            }
        }
    }
    Ok(TransitionMatrix { n, data })
}

/// `R_pi[s]`: the reward vector itself for state-based rewards, otherwise the
/// policy-weighted action rewards.
pub fn expected_reward(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<Vec<f64>> {
    pi.check_compatible(mdp)?;
    Ok(match mdp.reward() {
        Reward::State(r) => r.clone(),
        Reward::StateAction(r) => (0..mdp.n_states())
            .map(|s| {
                pi.row(s)
                    .iter()
                    .zip(&r[s * mdp.n_actions()..(s + 1) * mdp.n_actions()])
                    .map(|(p, x)| p * x)
                    .sum()
            })
            .collect(),
    })
}

/// Policy evaluation by fixed-point iteration of `V = R_pi + gamma * P^pi V`.
///
/// Terminal states contribute their reward and no continuation. Iteration
/// stops once the contraction bound guarantees a sup-norm error below `tol`.
pub fn value_dp(mdp: &TabularMdp, pi: &TabularPolicy, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(crate::error::invalid(format!("tolerance {tol} must be positive")));
    }
    let p = policy_transition(mdp, pi)?;
    let r = expected_reward(mdp, pi)?;
    let gamma = mdp.discount();
    let n = mdp.n_states();
    let stop = if gamma > 0.0 { tol * (1.0 - gamma) / gamma } else { f64::INFINITY };
    let mut v = r.clone();
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITERS {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let cont = if mdp.is_terminal(s) {
                0.0
            } else {
                p.row(s).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
            };
            next[s] = r[s] + gamma * cont;
            delta = delta.max((next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if !delta.is_finite() {
            break;
        }
        if delta <= stop {
            return Ok(v);
        }
    }
    Err(Error::NonConvergence(MAX_ITERS))
}

/// Discounted state-visitation distribution from the initial distribution,
/// `d = (1 - gamma) sum_t gamma^t rho0^T (P^pi)^t`.
pub fn visitation_dp(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<Vec<f64>> {
    visitation_dp_with_tol(mdp, pi, 1e-13)
}

/// [`visitation_dp`] truncated once the remaining tail mass `gamma^t` falls below `tol`.
pub fn visitation_dp_with_tol(mdp: &TabularMdp, pi: &TabularPolicy, tol: f64) -> Result<Vec<f64>> {
    let p = policy_transition(mdp, pi)?;
    let gamma = mdp.discount();
    let n = mdp.n_states();
    let mut dist = mdp.initial_dist().to_vec();
    let mut acc = vec![0.0; n];
    let mut weight = 1.0 - gamma;
    let mut tail = 1.0;
    let mut next = vec![0.0; n];
    while tail > tol {
        for (a, d) in acc.iter_mut().zip(&dist) {
            *a += weight * d;
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..n {
            if dist[s] == 0.0 {
                continue;
            }
            for (o, &t) in next.iter_mut().zip(p.row(s)) {
                *o += dist[s] * t;
            }
        }
        std::mem::swap(&mut dist, &mut next);
        weight *= gamma;
        tail *= gamma;
    }
    // Fold the truncated tail into the current distribution so the result sums to 1.
    for (a, d) in acc.iter_mut().zip(&dist) {
        *a += tail * d;
    }
    Ok(acc)
}
