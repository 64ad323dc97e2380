//! Evolution strategy with a policy-diversity bonus.
//!
//! Every generation perturbs the mean parameters with Gaussian noise and
//! scores each perturbation by its episode return plus `beta` times its
//! summed distance to an archive of earlier generation means. Ranked scores
//! weight the perturbations into an ascent direction applied with Adam. With
//! `beta = 0` no distances are computed and the run is plain ES.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::curve::CurvePoint;
use crate::env::{Env, Episode};
use crate::error::{invalid, Result};
use crate::metrics::MetricKind;
use crate::mmd::{mmd2_empirical, KernelSpec, SampleSet, SampleTag};
use crate::nn::{Activation, Adam, Architecture, DenseNet};
use crate::record::episode_samples;
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub population: usize,
    pub noise_std: f64,
    pub lr: f64,
    pub beta: f64,
    pub archive_capacity: usize,
    /// Distance used for the diversity bonus; required when `beta > 0`.
    pub metric: Option<MetricKind>,
    pub generations: usize,
    pub hidden: Vec<usize>,
    pub kernel: KernelSpec,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population: 50,
            noise_std: 0.05,
            lr: 0.01,
            beta: 0.0,
            archive_capacity: 50,
            metric: None,
            generations: 100,
            hidden: vec![32, 32],
            kernel: KernelSpec::default(),
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(invalid("population must hold at least two members"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid(format!("diversity weight {} must be finite and non-negative", self.beta)));
        }
        if self.beta > 0.0 {
            let kind = self.metric.ok_or_else(|| invalid("a positive diversity weight needs a metric"))?;
            SampleTag::for_metric(kind)?;
            if self.archive_capacity == 0 {
                return Err(invalid("archive capacity must be positive"));
            }
        }
        if !(self.noise_std > 0.0) || !(self.lr > 0.0) || self.generations == 0 {
            return Err(invalid("noise scale, learning rate and generations must be positive"));
        }
        Ok(())
    }

    fn uses_diversity(&self) -> bool {
        self.beta > 0.0 && self.metric.is_some()
    }
}

/// Scores of one generation's population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub returns: Vec<f64>,
    /// Summed archive distances; empty when no bonus is used.
    pub diversity: Vec<f64>,
    pub fitness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsRun {
    /// Return of the mean policy after each generation.
    pub curve: Vec<CurvePoint>,
    pub generations: Vec<GenerationLog>,
    /// FNV-1a hash of the mean parameters' bits after each generation.
    pub param_trace: Vec<u64>,
    pub policy: DenseNet,
}

pub fn param_hash(theta: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in theta {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Centered ranks in `[-0.5, 0.5]`; ties are ordered by index.
pub fn centered_ranks(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    let mut out = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        out[i] = if n > 1 { r as f64 / (n - 1) as f64 - 0.5 } else { 0.0 };
    }
    out
}

fn metric_samples(ep: &Episode, tag: SampleTag) -> Result<SampleSet> {
    let (sa, ss, sg) = episode_samples(std::slice::from_ref(ep))?;
    Ok(match tag {
        SampleTag::StateAction => sa,
        SampleTag::StateNextState => ss,
        SampleTag::StateReturn => sg,
    })
}

fn distance(a: &SampleSet, b: &SampleSet, kernel: &KernelSpec) -> Result<f64> {
    if a.tag() == SampleTag::StateReturn {
        let pooled = a.points().chain(b.points()).map(|p| p[p.len() - 1]);
        let (lo, hi) = pooled.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), g| (l.min(g), h.max(g)));
        return mmd2_empirical(&a.normalize_returns(lo, hi), &b.normalize_returns(lo, hi), kernel);
    }
    mmd2_empirical(a, b, kernel)
}

/// Runs the (diversity-guided) evolution strategy on `env`.
pub fn dges_run(cfg: &EsConfig, env: &dyn Env, seed: u64) -> Result<EsRun> {
    dges_run_observed(cfg, env, seed, &mut |_, _, _| {})
}

/// Like [`dges_run`], calling `observer(generation, mean_policy, mean_return)`
/// after every update.
pub fn dges_run_observed(
    cfg: &EsConfig,
    env: &dyn Env,
    seed: u64,
    observer: &mut dyn FnMut(usize, &DenseNet, f64),
) -> Result<EsRun> {
    cfg.validate()?;
    let output_act = if env.is_discrete() { Activation::Softmax } else { Activation::Tanh };
    let arch = Architecture::mlp(env.state_dim(), &cfg.hidden, Activation::Relu, env.action_dim(), output_act)?;
    let mut mean = DenseNet::init(arch.clone(), &mut rng_from(derive_seed(seed, &[0])))?;
    let n_params = mean.param_count();
    let mut opt = Adam::new(n_params, cfg.lr);
    let tag = match (cfg.uses_diversity(), cfg.metric) {
        (true, Some(kind)) => Some(SampleTag::for_metric(kind)?),
        _ => None,
    };
    let mut archive: std::collections::VecDeque<SampleSet> = std::collections::VecDeque::new();
    let mut run = EsRun { curve: Vec::new(), generations: Vec::new(), param_trace: Vec::new(), policy: mean.clone() };
    let mut steps = 0u64;
    for g in 0..cfg.generations as u64 {
        let mut noise_rng = rng_from(derive_seed(seed, &[1, g]));
        let noise: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| (0..n_params).map(|_| StandardNormal.sample(&mut noise_rng)).collect())
            .collect();
        let mut returns = Vec::with_capacity(cfg.population);
        let mut diversity = Vec::new();
        for (k, eps) in noise.iter().enumerate() {
            let theta: Vec<f64> = mean.params().iter().zip(eps).map(|(m, e)| m + cfg.noise_std * e).collect();
            let member = DenseNet::unflatten(&theta, &arch)?;
            let ep = env.rollout(&member, &mut rng_from(derive_seed(seed, &[2, g, k as u64])))?;
            steps += ep.len() as u64;
            returns.push(ep.total_reward());
            if let Some(tag) = tag {
                let own = metric_samples(&ep, tag)?;
                let mut d = 0.0;
                for anc in &archive {
                    d += distance(&own, anc, &cfg.kernel)?.max(0.0);
                }
                diversity.push(d);
            }
        }
        let fitness: Vec<f64> = if diversity.is_empty() {
            returns.clone()
        } else {
            returns.iter().zip(&diversity).map(|(r, d)| r + cfg.beta * d).collect()
        };
        let u = centered_ranks(&fitness);
        let scale = 1.0 / (cfg.population as f64 * cfg.noise_std);
        let mut ascent = vec![0.0; n_params];
        for (uk, eps) in u.iter().zip(&noise) {
            for (a, e) in ascent.iter_mut().zip(eps) {
                *a += uk * e;
            }
        }
        let descent: Vec<f64> = ascent.iter().map(|a| -a * scale).collect();
        opt.step(mean.params_mut(), &descent)?;
        let ep = env.rollout(&mean, &mut rng_from(derive_seed(seed, &[3, g])))?;
        steps += ep.len() as u64;
        if let Some(tag) = tag {
            if archive.len() == cfg.archive_capacity {
                archive.pop_front();
            }
            archive.push_back(metric_samples(&ep, tag)?);
        }
        observer(g as usize, &mean, ep.total_reward());
        run.curve.push(CurvePoint { steps, mean_return: ep.total_reward() });
        run.generations.push(GenerationLog { returns, diversity, fitness });
        run.param_trace.push(param_hash(mean.params()));
    }
    run.policy = mean;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{PointEnv, PointEnvParams};
    use crate::rng::Rng;

    fn small(beta: f64, metric: Option<MetricKind>) -> EsConfig {
        EsConfig { population: 8, generations: 3, hidden: vec![8], beta, metric, ..EsConfig::default() }
    }

    #[test]
    fn zero_beta_is_plain_es() {
        let env = PointEnv::new(PointEnvParams::default()).unwrap();
        let plain = dges_run(&small(0.0, None), &env, 4).unwrap();
        let zero = dges_run(&small(0.0, Some(MetricKind::InflIrrel)), &env, 4).unwrap();
        assert_eq!(plain.param_trace, zero.param_trace);
        assert_eq!(plain.policy, zero.policy);
        let div = dges_run(&small(1.0, Some(MetricKind::InflIrrel)), &env, 4).unwrap();
        assert_eq!(div.generations[0].diversity, vec![0.0; 8]);
        assert!(div.generations[1].diversity.iter().all(|&d| d > 0.0));
        assert_eq!(div.generations[0].fitness, plain.generations[0].fitness);
        assert_ne!(div.generations[1].fitness, plain.generations[1].fitness);
    }

    #[test]
    fn ranks_are_centered() {
        assert_eq!(centered_ranks(&[3.0, -1.0, 10.0]), vec![0.0, -0.5, 0.5]);
        assert_eq!(centered_ranks(&[1.0, 1.0]), vec![-0.5, 0.5]);
    }

    struct Flat(PointEnv);

    impl Env for Flat {
        fn state_dim(&self) -> usize {
            self.0.state_dim()
        }
        fn action_dim(&self) -> usize {
            self.0.action_dim()
        }
        fn is_discrete(&self) -> bool {
            false
        }
        fn horizon(&self) -> usize {
            self.0.horizon()
        }
        fn discount(&self) -> f64 {
            self.0.discount()
        }
        fn rollout(&self, policy: &DenseNet, rng: &mut Rng) -> Result<Episode> {
            let mut ep = self.0.rollout(policy, rng)?;
            ep.steps.iter_mut().for_each(|s| s.reward = 1.0);
            Ok(Episode::new(ep.steps, self.discount()))
        }
    }

    #[test]
    fn flat_reward_ranks_by_diversity() {
        let env = Flat(PointEnv::new(PointEnvParams::default()).unwrap());
        let run = dges_run(&small(0.5, Some(MetricKind::DistIrrel)), &env, 9).unwrap();
        let g = &run.generations[2];
        assert!(g.returns.iter().all(|&r| r == g.returns[0]));
        assert_eq!(centered_ranks(&g.fitness), centered_ranks(&g.diversity));
    }

    #[test]
    fn validation() {
        let env = PointEnv::new(PointEnvParams::default()).unwrap();
        assert!(dges_run(&small(-1.0, Some(MetricKind::DistIrrel)), &env, 0).is_err());
        assert!(dges_run(&small(1.0, None), &env, 0).is_err());
        assert!(dges_run(&EsConfig { population: 1, ..small(0.0, None) }, &env, 0).is_err());
    }
}
