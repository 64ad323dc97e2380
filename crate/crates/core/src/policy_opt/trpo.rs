//! Policy gradient with a sample-estimated trust region.
//!
//! Each outer iteration collects a batch of steps, then applies up to a fixed
//! number of minibatch REINFORCE updates. After every update the distance
//! between the updated and the pre-iteration policy is estimated from fresh
//! rollouts; once it exceeds `sigma` the remaining updates of the iteration
//! are skipped. Without a metric the loop is plain policy gradient.

use serde::{Deserialize, Serialize};

use super::curve::CurvePoint;
use crate::env::GridEnv;
use crate::error::{invalid, Error, Result};
use crate::metrics::{jeffreys_metric, MetricKind, DEFAULT_SMOOTHING};
use crate::mdp::{rollout, TabularMdp, TabularPolicy, Trajectory};
use crate::mmd::{mmd2_empirical, KernelSpec, SampleTag};
use crate::nn::{Activation, Adam, Architecture, DenseNet, Matrix};
use crate::record::episode_samples;
use crate::rng::{derive_seed, rng_from, sample_without_replacement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricEstimator {
    Mmd,
    Jeffreys,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    /// `None` disables the constraint.
    pub metric: Option<MetricKind>,
    pub sigma: f64,
    pub estimator: MetricEstimator,
    pub iterations: usize,
    pub samples_per_iter: usize,
    pub minibatches: usize,
    pub minibatch_size: usize,
    /// Rollouts per policy for each distance estimate.
    pub eval_rollouts: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub horizon: usize,
    pub kernel: KernelSpec,
    /// Points per side for MMD estimates; rollouts are resampled to this size.
    pub mmd_sample_size: usize,
    pub jeffreys_bins: usize,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            metric: None,
            sigma: f64::INFINITY,
            estimator: MetricEstimator::Mmd,
            iterations: 20,
            samples_per_iter: 4096,
            minibatches: 100,
            minibatch_size: 64,
            eval_rollouts: 5,
            lr: 1e-2,
            hidden: vec![16, 16],
            horizon: crate::mdp::gridworld::NDIRECTION_HORIZON,
            kernel: KernelSpec::default(),
            mmd_sample_size: 100,
            jeffreys_bins: 10,
        }
    }
}

/// Constraint thresholds searched for each metric.
pub fn sigma_grid(kind: MetricKind) -> &'static [f64] {
    match kind {
        MetricKind::ValueIrrel => &[0.05, 0.1, 0.5, 1.0, 2.0, 5.0],
        _ => &[0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return Err(invalid(format!("threshold {} must be non-negative", self.sigma)));
        }
        if let Some(kind) = self.metric {
            if self.estimator == MetricEstimator::Mmd && !kind.is_estimable() {
                return Err(Error::NoEstimator(kind));
            }
        }
        if self.iterations == 0 || self.samples_per_iter == 0 || self.minibatch_size == 0 || self.eval_rollouts == 0 {
            return Err(invalid("iteration, sample and rollout counts must be positive"));
        }
        if !(self.lr > 0.0) || self.horizon == 0 || self.mmd_sample_size == 0 || self.jeffreys_bins == 0 {
            return Err(invalid("learning rate, horizon and estimator sizes must be positive"));
        }
        Ok(())
    }
}

/// One minibatch update and the distance check that followed it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub iteration: usize,
    pub update: usize,
    pub estimate: Option<f64>,
    pub tripped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrpoRun {
    pub curve: Vec<CurvePoint>,
    pub log: Vec<UpdateLog>,
    pub policy: DenseNet,
}

impl TrpoRun {
    /// Number of updates applied after a trip within the same iteration.
    pub fn post_trip_updates(&self) -> usize {
        let mut count = 0;
        let mut tripped_in: Option<usize> = None;
        for e in &self.log {
            if tripped_in == Some(e.iteration) {
                count += 1;
            }
            if e.tripped {
                tripped_in = Some(e.iteration);
            }
        }
        count
    }

    pub fn trips(&self) -> usize {
        self.log.iter().filter(|e| e.tripped).count()
    }
}

struct Estimator<'a> {
    cfg: &'a TrustRegionConfig,
    env: &'a GridEnv,
    kind: MetricKind,
}

impl Estimator<'_> {
    fn rollouts(&self, pi: &TabularPolicy, seed: u64) -> Result<Vec<Trajectory>> {
        (0..self.cfg.eval_rollouts)
            .map(|e| rollout(&self.env.mdp, pi, self.cfg.horizon, derive_seed(seed, &[e as u64])))
            .collect()
    }

    fn distance(&self, old: &[Trajectory], new: &[Trajectory], seed: u64) -> Result<f64> {
        match self.cfg.estimator {
            MetricEstimator::Jeffreys => jeffreys_metric(old, new, self.kind, &self.env.mdp, self.cfg.jeffreys_bins, DEFAULT_SMOOTHING),
            MetricEstimator::Mmd => {
                let tag = SampleTag::for_metric(self.kind)?;
                let pick = |ts: &[Trajectory]| -> Result<_> {
                    let eps: Vec<_> = ts.iter().map(|t| self.env.encode(t)).collect();
                    let (sa, ss, sg) = episode_samples(&eps)?;
                    Ok(match tag {
                        SampleTag::StateAction => sa,
                        SampleTag::StateNextState => ss,
                        SampleTag::StateReturn => sg,
                    })
                };
                let (a, b) = (pick(old)?, pick(new)?);
                let m = self.cfg.mmd_sample_size;
                let a = a.subsample(m, &mut rng_from(derive_seed(seed, &[0])))?;
                let b = b.subsample(m, &mut rng_from(derive_seed(seed, &[1])))?;
                mmd2_empirical(&a, &b, &self.cfg.kernel)
            }
        }
    }
}

/// Runs policy optimization on a discrete-state MDP and returns the learning
/// curve together with the per-update constraint log.
pub fn trpo_run(cfg: &TrustRegionConfig, mdp: &TabularMdp, seed: u64) -> Result<TrpoRun> {
    trpo_run_observed(cfg, mdp, seed, &mut |_, _, _| {})
}

/// Like [`trpo_run`], calling `observer(iteration, policy, batch_mean_return)`
/// with the policy that collected each batch.
pub fn trpo_run_observed(
    cfg: &TrustRegionConfig,
    mdp: &TabularMdp,
    seed: u64,
    observer: &mut dyn FnMut(usize, &DenseNet, f64),
) -> Result<TrpoRun> {
    cfg.validate()?;
    let env = GridEnv::new(mdp.clone(), cfg.horizon)?;
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let arch = Architecture::mlp(n_s, &cfg.hidden, Activation::Tanh, n_a, Activation::Softmax)?;
    let mut net = DenseNet::init(arch, &mut rng_from(derive_seed(seed, &[0])))?;
    let mut opt = Adam::new(net.param_count(), cfg.lr);
    let estimator = cfg.metric.map(|kind| Estimator { cfg, env: &env, kind });
    let eye = |s: usize| crate::env::one_hot(s, n_s);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut log = Vec::new();
    let mut steps_so_far = 0u64;
    for it in 0..cfg.iterations {
        let pi_old = env.tabular_policy(&net)?;
        let collect_seed = derive_seed(seed, &[1, it as u64]);
        let mut batch: Vec<(usize, usize, f64)> = Vec::with_capacity(cfg.samples_per_iter + cfg.horizon);
        let mut totals = Vec::new();
        let mut ep = 0u64;
        while batch.len() < cfg.samples_per_iter {
            let t = rollout(mdp, &pi_old, cfg.horizon, derive_seed(collect_seed, &[ep]))?;
            totals.push(t.total_reward());
            batch.extend(t.steps.iter().zip(&t.returns).map(|(s, &g)| (s.state, s.action, g)));
            ep += 1;
        }
        steps_so_far += batch.len() as u64;
        let batch_return = crate::stats::mean(&totals);
        observer(it, &net, batch_return);
        curve.push(CurvePoint { steps: steps_so_far, mean_return: batch_return });
        let baseline = batch.iter().map(|b| b.2).sum::<f64>() / batch.len() as f64;
        let old_rollouts = match &estimator {
            Some(e) => Some(e.rollouts(&pi_old, derive_seed(seed, &[3, it as u64]))?),
            None => None,
        };
        let mut mb_rng = rng_from(derive_seed(seed, &[2, it as u64]));
        let mb = cfg.minibatch_size.min(batch.len());
        for u in 0..cfg.minibatches {
            let idx = sample_without_replacement(&mut mb_rng, batch.len(), mb);
            let x = Matrix::from_rows(&idx.iter().map(|&k| eye(batch[k].0)).collect::<Vec<_>>())?;
            let (y, tape) = net.forward(&x)?;
            let mut up = Matrix::zeros(mb, n_a);
            for (r, &k) in idx.iter().enumerate() {
                let (_, a, g) = batch[k];
                up.row_mut(r)[a] = -(g - baseline) / (mb as f64 * y.get(r, a).max(1e-300));
            }
            let grads = net.backward(&tape, &up)?;
            opt.step(net.params_mut(), &grads.params)?;
            let (estimate, tripped) = match (&estimator, &old_rollouts) {
                (Some(e), Some(old)) => {
                    let pi_new = env.tabular_policy(&net)?;
                    let s = derive_seed(seed, &[4, it as u64, u as u64]);
                    let new = e.rollouts(&pi_new, s)?;
                    let d = e.distance(old, &new, s)?;
                    (Some(d), d > cfg.sigma)
                }
                _ => (None, false),
            };
            log.push(UpdateLog { iteration: it, update: u, estimate, tripped });
            if tripped {
                break;
            }
        }
    }
    Ok(TrpoRun { curve, log, policy: net })
}
