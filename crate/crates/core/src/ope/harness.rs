use serde::{Deserialize, Serialize};

use super::split::{make_split, OpeSplit, SplitMode};
use crate::error::{invalid, Result};
use crate::mmd::MmdConfig;
use crate::nn::DenseNet;
use crate::record::PolicyRecord;
use crate::repr::{train, PairCache, ReprObjective, TrainConfig, TrainedModel};
use crate::rng::derive_seed;
use crate::stats::{mean, sample_std};

/// Errors of a trained predictor on normalized returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeScores {
    pub train_error: f64,
    pub t_error: f64,
    /// `t_error - train_error`.
    pub g_gap: f64,
}

fn split_error(model: &TrainedModel, dataset: &[PolicyRecord], idx: &[usize]) -> Result<f64> {
    let policies: Vec<&DenseNet> = idx.iter().map(|&i| &dataset[i].policy).collect();
    let pred = model.predict(&policies)?;
    let sq: Vec<f64> = pred
        .iter()
        .zip(idx)
        .map(|(p, &i)| {
            let e = p - model.normalizer.apply(dataset[i].mean_return);
            e * e
        })
        .collect();
    Ok(mean(&sq))
}

/// Mean squared errors on the training and test parts of `split`, with
/// returns normalized by the model's training statistics.
pub fn evaluate(model: &TrainedModel, split: &OpeSplit, dataset: &[PolicyRecord]) -> Result<OpeScores> {
    let train_error = split_error(model, dataset, &split.train)?;
    let t_error = split_error(model, dataset, &split.test)?;
    Ok(OpeScores { train_error, t_error, g_gap: t_error - train_error })
}

/// Training epochs for a split ratio: `base` at 20%, five times that at 40%
/// and ten times at 80%.
pub fn epochs_for_ratio(ratio: f64, base: usize) -> usize {
    let factor = if ratio <= 0.2 {
        1.0
    } else if ratio <= 0.4 {
        5.0
    } else {
        10.0
    };
    (base as f64 * factor).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpeConfig {
    pub mode: SplitMode,
    pub ratio: f64,
    pub trials: usize,
    /// Epochs at the 20% ratio, see [`epochs_for_ratio`].
    pub base_epochs: usize,
    pub train: TrainConfig,
    /// Estimator settings for alignment pair caches.
    pub mmd: MmdConfig,
    pub seed: u64,
}

impl Default for OpeConfig {
    fn default() -> Self {
        Self {
            mode: SplitMode::Weak,
            ratio: 0.8,
            trials: 10,
            base_epochs: 100,
            train: TrainConfig { batch_size: 64, ..TrainConfig::default() },
            mmd: MmdConfig { sample_size: 100, ..MmdConfig::default() },
            seed: 0,
        }
    }
}

/// Aggregated scores of one abstraction over several trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeRow {
    pub objective: String,
    pub mode: SplitMode,
    pub ratio: f64,
    pub trials: usize,
    pub t_error_mean: f64,
    pub t_error_std: f64,
    pub g_gap_mean: f64,
    pub g_gap_std: f64,
    pub scores: Vec<OpeScores>,
}

/// Split used by trial `t` of [`run_ope`].
pub fn trial_split(dataset: &[PolicyRecord], cfg: &OpeConfig, t: usize) -> Result<OpeSplit> {
    make_split(dataset, cfg.mode, cfg.ratio, derive_seed(cfg.seed, &[1, t as u64]))
}

/// Training settings used by trial `t` of [`run_ope`].
pub fn trial_train_config(cfg: &OpeConfig, t: usize) -> TrainConfig {
    TrainConfig { epochs: epochs_for_ratio(cfg.ratio, cfg.base_epochs), seed: derive_seed(cfg.seed, &[2, t as u64]), ..cfg.train.clone() }
}

/// Pair cache an alignment objective uses when none is supplied.
pub fn default_pair_cache(dataset: &[PolicyRecord], kind: crate::metrics::MetricKind, cfg: &OpeConfig) -> Result<PairCache> {
    PairCache::from_records(dataset, kind, &cfg.mmd, derive_seed(cfg.seed, &[0]))
}

/// Trains `objective` on `trials` splits with distinct seeds and aggregates
/// the test error and generalization gap.
///
/// Alignment objectives estimate their pair cache once over the whole
/// dataset; `cache` may supply it instead.
pub fn run_ope(dataset: &[PolicyRecord], objective: ReprObjective, cfg: &OpeConfig, cache: Option<&PairCache>) -> Result<OpeRow> {
    if cfg.trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let built;
    let cache = match (objective, cache) {
        (ReprObjective::Align { kind, .. }, None) => {
            built = default_pair_cache(dataset, kind, cfg)?;
            Some(&built)
        }
        (_, c) => c,
    };
    let mut scores = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let split = trial_split(dataset, cfg, t)?;
        let model = train(dataset, &split.train, objective, cache, &trial_train_config(cfg, t))?;
        scores.push(evaluate(&model, &split, dataset)?);
    }
    let t: Vec<f64> = scores.iter().map(|s| s.t_error).collect();
    let g: Vec<f64> = scores.iter().map(|s| s.g_gap).collect();
    Ok(OpeRow {
        objective: objective.label(),
        mode: cfg.mode,
        ratio: cfg.ratio,
        trials: cfg.trials,
        t_error_mean: mean(&t),
        t_error_std: sample_std(&t),
        g_gap_mean: mean(&g),
        g_gap_std: sample_std(&g),
        scores,
    })
}
