use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Env, GridEnv, PointEnv, PointEnvParams};
use crate::error::{invalid, Error, Result};
use crate::mdp::gridworld::{build_gridworld, GridKind, GridParams};
use crate::nn::DenseNet;
use crate::policy_opt::{dges_run_observed, trpo_run_observed, EsConfig, TrustRegionConfig};
use crate::record::{PolicyRecord, Provenance};
use crate::rng::{derive_seed, rng_from, sample_without_replacement, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Point(PointEnvParams),
    Grid { kind: GridKind, params: GridParams, horizon: usize },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Env>> {
        Ok(match self {
            EnvSpec::Point(p) => Box::new(PointEnv::new(p.clone())?),
            EnvSpec::Grid { kind, params, horizon } => Box::new(GridEnv::new(build_gridworld(*kind, params)?, *horizon)?),
        })
    }
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Point(PointEnvParams { start_noise: 0.5, ..PointEnvParams::default() })
    }
}

/// Algorithm whose checkpoints populate the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trainer {
    Es(EsConfig),
    /// Policy gradient; needs a grid environment.
    Pg(TrustRegionConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub env: EnvSpec,
    pub trainer: Trainer,
    /// One training run per seed.
    pub training_seeds: Vec<u64>,
    /// Keep every n-th trainer step as a candidate.
    pub checkpoint_every: usize,
    pub intervals: usize,
    /// Records drawn per return interval.
    pub per_interval: usize,
    /// Rollouts per record for the mean return.
    pub rollouts: usize,
    /// Points kept per sample joint.
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::default(),
            trainer: Trainer::Es(EsConfig { generations: 60, ..EsConfig::default() }),
            training_seeds: vec![0, 1, 2],
            checkpoint_every: 2,
            intervals: 10,
            per_interval: 6,
            rollouts: 30,
            sample_size: 500,
            seed: 0,
        }
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.training_seeds.is_empty() {
            return Err(invalid("at least one training seed is required"));
        }
        if self.checkpoint_every == 0 || self.intervals == 0 || self.per_interval == 0 {
            return Err(invalid("checkpoint spacing, intervals and per-interval count must be positive"));
        }
        if self.rollouts == 0 || self.sample_size == 0 {
            return Err(invalid("rollouts and sample size must be positive"));
        }
        if let (Trainer::Pg(_), EnvSpec::Point(_)) = (&self.trainer, &self.env) {
            return Err(invalid("the policy-gradient trainer needs a grid environment"));
        }
        Ok(())
    }
}

/// A policy saved during training with the return the trainer observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: DenseNet,
    pub score: f64,
    pub provenance: Provenance,
}

/// Picks up to `intervals * per_interval` of `scores` so that each
/// equal-width return interval contributes `per_interval` entries. Intervals
/// with too few entries pass their quota on to the others, one at a time in
/// interval order. Non-finite scores are ignored. Returns sorted indices.
pub fn bucket_checkpoints(scores: &[f64], intervals: usize, per_interval: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let finite: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Diverged("no checkpoint has a finite return".into()));
    }
    let lo = finite.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
    let hi = finite.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / intervals as f64;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); intervals];
    for &i in &finite {
        let b = if width > 0.0 { (((scores[i] - lo) / width) as usize).min(intervals - 1) } else { 0 };
        bins[b].push(i);
    }
    for bin in &mut bins {
        let order = sample_without_replacement(rng, bin.len(), bin.len());
        *bin = order.into_iter().map(|k| bin[k]).collect();
    }
    let target = (intervals * per_interval).min(finite.len());
    let mut taken = vec![0usize; intervals];
    for (b, bin) in bins.iter().enumerate() {
        taken[b] = per_interval.min(bin.len());
    }
    let mut total: usize = taken.iter().sum();
    while total < target {
        for (b, bin) in bins.iter().enumerate() {
            if total < target && taken[b] < bin.len() {
                taken[b] += 1;
                total += 1;
            }
        }
    }
    let mut out: Vec<usize> = bins.iter().zip(&taken).flat_map(|(bin, &t)| bin[..t].iter().copied()).collect();
    out.sort_unstable();
    Ok(out)
}

fn checkpoints(cfg: &CollectConfig, env: &dyn Env) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::new();
    for &seed in &cfg.training_seeds {
        let mut observe = |step: usize, policy: &DenseNet, score: f64| {
            if step % cfg.checkpoint_every == 0 {
                out.push(Checkpoint { policy: policy.clone(), score, provenance: Provenance { seed, checkpoint: step } });
            }
        };
        match (&cfg.trainer, &cfg.env) {
            (Trainer::Es(es), _) => {
                dges_run_observed(es, env, seed, &mut observe)?;
            }
            (Trainer::Pg(pg), EnvSpec::Grid { kind, params, horizon }) => {
                let tc = TrustRegionConfig { horizon: *horizon, ..pg.clone() };
                trpo_run_observed(&tc, &build_gridworld(*kind, params)?, seed, &mut observe)?;
            }
            (Trainer::Pg(_), EnvSpec::Point(_)) => return Err(invalid("the policy-gradient trainer needs a grid environment")),
        }
    }
    Ok(out)
}

/// Trains policies, buckets their checkpoints by return and records the
/// selected ones.
pub fn collect_dataset(cfg: &CollectConfig) -> Result<Vec<PolicyRecord>> {
    cfg.validate()?;
    let env = cfg.env.build()?;
    let cps = checkpoints(cfg, env.as_ref())?;
    let scores: Vec<f64> = cps.iter().map(|c| c.score).collect();
    let chosen = bucket_checkpoints(&scores, cfg.intervals, cfg.per_interval, &mut rng_from(derive_seed(cfg.seed, &[0])))?;
    chosen
        .par_iter()
        .map(|&i| {
            let c = &cps[i];
            PolicyRecord::collect(env.as_ref(), c.policy.clone(), cfg.rollouts, cfg.sample_size, derive_seed(cfg.seed, &[1, i as u64]), c.provenance)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    records: Vec<String>,
}

const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "policy-dataset-v1";

/// Writes one JSON file per record plus a manifest listing them.
pub fn save_dataset(dir: &Path, records: &[PolicyRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let name = format!("record_{i:04}.json");
        std::fs::write(dir.join(&name), r.to_json()?)?;
        names.push(name);
    }
    let manifest = Manifest { format: FORMAT.into(), records: names };
    std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<PolicyRecord>> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST))?)?;
    if manifest.format != FORMAT {
        return Err(invalid(format!("unsupported dataset format '{}'", manifest.format)));
    }
    manifest.records.iter().map(|name| PolicyRecord::from_json(&std::fs::read_to_string(dir.join(name))?)).collect()
}
