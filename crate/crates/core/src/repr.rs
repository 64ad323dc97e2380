//! Training policy representations.
//!
//! An encoder maps policy parameters to embeddings; a value head (the
//! policy-extended value function, PeVFA) maps embeddings to normalized
//! returns. Encoders are trained with one of several objectives:
//!
//! * `Align`: embedding distances track a scaled policy metric,
//!   `(|chi_i - chi_j| - eta * d(i, j))^2` averaged over all pairs in a batch.
//! * `Contrastive`: InfoNCE over cosine similarity, where the positive of a
//!   policy is a noisy copy of its parameters and the other policies'
//!   positives are negatives.
//! * `EndToEnd`: only the value loss, back-propagated into the encoder.
//! * `Random`: the encoder stays at its initialization.
//! * `RawParams`: no encoder; the value head reads the flat parameters.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::lpe::{LpeModel, DEFAULT_ENCODER_HIDDEN, DEFAULT_REPR_DIM};
use crate::metrics::MetricKind;
use crate::mmd::MmdConfig;
use crate::nn::{Activation, Adam, Architecture, DenseNet, Matrix, DEFAULT_LR};
use crate::record::{estimate_metric, PolicyRecord};
use crate::rng::{derive_seed, rng_from, sample_without_replacement};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReprObjective {
    Align { kind: MetricKind, eta: f64 },
    Contrastive { temperature: f64, noise_scale: f64 },
    EndToEnd,
    Random,
    RawParams,
}

impl ReprObjective {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ReprObjective::Align { kind, eta } => {
                if !kind.is_estimable() {
                    return Err(Error::NoEstimator(kind));
                }
                if !(eta > 0.0) {
                    return Err(invalid(format!("eta {eta} must be positive")));
                }
            }
            ReprObjective::Contrastive { temperature, noise_scale } => {
                if !(temperature > 0.0) || !(noise_scale > 0.0) {
                    return Err(invalid("temperature and noise scale must be positive"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Short row label used in reports.
    pub fn label(&self) -> String {
        match self {
            ReprObjective::Align { kind, .. } => format!("align-{}", kind.short_name()),
            ReprObjective::Contrastive { .. } => "contrastive".into(),
            ReprObjective::EndToEnd => "end-to-end".into(),
            ReprObjective::Random => "random".into(),
            ReprObjective::RawParams => "raw-params".into(),
        }
    }
}

/// Precomputed metric values between dataset policies, keyed by unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCache {
    kind: MetricKind,
    values: BTreeMap<(usize, usize), f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    i: usize,
    j: usize,
    kind: MetricKind,
    value: f64,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

impl PairCache {
    pub fn new(kind: MetricKind) -> Self {
        Self { kind, values: BTreeMap::new() }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn insert(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(invalid(format!("pair value {value} must be finite and non-negative")));
        }
        if i != j {
            self.values.insert(key(i, j), value);
        }
        Ok(())
    }

    /// The cached value; a policy is at distance zero from itself.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Ok(0.0);
        }
        self.values.get(&key(i, j)).copied().ok_or(Error::MissingPair(i, j))
    }

    pub fn covers(&self, indices: &[usize]) -> bool {
        indices.iter().enumerate().all(|(a, &i)| indices[a + 1..].iter().all(|&j| self.get(i, j).is_ok()))
    }

    /// Fills every pair among `indices` with `f`, evaluated in parallel.
    pub fn build(kind: MetricKind, indices: &[usize], f: impl Fn(usize, usize) -> Result<f64> + Sync) -> Result<Self> {
        let pairs: Vec<(usize, usize)> =
            indices.iter().enumerate().flat_map(|(a, &i)| indices[a + 1..].iter().map(move |&j| (i, j))).collect();
        let values = pairs.par_iter().map(|&(i, j)| f(i, j)).collect::<Result<Vec<_>>>()?;
        let mut cache = Self::new(kind);
        for (&(i, j), v) in pairs.iter().zip(values) {
            cache.insert(i, j, v)?;
        }
        Ok(cache)
    }

    /// MMD estimates between all pairs of records, each pair with its own seed.
    pub fn from_records(records: &[PolicyRecord], kind: MetricKind, cfg: &MmdConfig, seed: u64) -> Result<Self> {
        let idx: Vec<usize> = (0..records.len()).collect();
        Self::build(kind, &idx, |i, j| {
            estimate_metric(&records[i], &records[j], kind, cfg, derive_seed(seed, &[i as u64, j as u64])).map(|v| v.max(0.0))
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let entries: Vec<PairEntry> =
            self.values.iter().map(|(&(i, j), &value)| PairEntry { i, j, kind: self.kind, value }).collect();
        Ok(serde_json::to_string(&entries)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<PairEntry> = serde_json::from_str(text)?;
        let kind = entries.first().map(|e| e.kind).ok_or(Error::Empty("pair cache"))?;
        let mut cache = Self::new(kind);
        for e in entries {
            if e.kind != kind {
                return Err(invalid("pair cache mixes metric kinds"));
            }
            cache.insert(e.i, e.j, e.value)?;
        }
        Ok(cache)
    }
}

/// Alignment loss of a batch of embeddings and its gradient.
///
/// Pairs at zero embedding distance contribute no gradient.
pub fn alignment_loss_embeddings(emb: &Matrix, indices: &[usize], cache: &PairCache, eta: f64) -> Result<(f64, Matrix)> {
    align_core(emb, indices, |i, j| cache.get(i, j).map(Some), eta)
}

/// [`alignment_loss_embeddings`] over only the batch pairs the cache holds.
/// A batch without any cached pair has zero loss.
pub fn alignment_loss_cached_pairs(emb: &Matrix, indices: &[usize], cache: &PairCache, eta: f64) -> Result<(f64, Matrix)> {
    align_core(emb, indices, |i, j| Ok(cache.get(i, j).ok()), eta)
}

fn align_core(emb: &Matrix, indices: &[usize], lookup: impl Fn(usize, usize) -> Result<Option<f64>>, eta: f64) -> Result<(f64, Matrix)> {
    let b = emb.rows();
    if b < 2 || indices.len() != b {
        return Err(invalid("alignment needs at least two embeddings with one index each"));
    }
    let mut terms = Vec::with_capacity(b * (b - 1) / 2);
    for i in 0..b {
        for j in i + 1..b {
            if let Some(d) = lookup(indices[i], indices[j])? {
                terms.push((i, j, eta * d));
            }
        }
    }
    let mut grad = Matrix::zeros(b, emb.cols());
    if terms.is_empty() {
        return Ok((0.0, grad));
    }
    let n_pairs = terms.len() as f64;
    let mut loss = 0.0;
    let mut diff = vec![0.0; emb.cols()];
    for (i, j, target) in terms {
        for ((d, x), y) in diff.iter_mut().zip(emb.row(i)).zip(emb.row(j)) {
            *d = x - y;
        }
        let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        let r = dist - target;
        loss += r * r;
        if dist > 0.0 {
            let scale = 2.0 * r / (n_pairs * dist);
            for (g, d) in grad.row_mut(i).iter_mut().zip(&diff) {
                *g += scale * d;
            }
            for (g, d) in grad.row_mut(j).iter_mut().zip(&diff) {
                *g -= scale * d;
            }
        }
    }
    Ok((loss / n_pairs, grad))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12)
}

/// InfoNCE loss with cosine similarity: row `i` of `positives` is the
/// positive for anchor `i` and every other row a negative.
pub fn info_nce(anchors: &Matrix, positives: &Matrix, temperature: f64) -> Result<(f64, Matrix, Matrix)> {
    let b = anchors.rows();
    if b < 2 {
        return Err(invalid("contrastive loss needs at least one negative"));
    }
    if positives.rows() != b || positives.cols() != anchors.cols() {
        return Err(shape("anchors and positives differ in shape"));
    }
    if !(temperature > 0.0) {
        return Err(invalid("temperature must be positive"));
    }
    let an: Vec<f64> = anchors.iter_rows().map(norm).collect();
    let pn: Vec<f64> = positives.iter_rows().map(norm).collect();
    let cos = |i: usize, j: usize| -> f64 {
        anchors.row(i).iter().zip(positives.row(j)).map(|(a, p)| a * p).sum::<f64>() / (an[i] * pn[j])
    };
    let mut loss = 0.0;
    let mut ga = Matrix::zeros(b, anchors.cols());
    let mut gp = Matrix::zeros(b, anchors.cols());
    for i in 0..b {
        let c: Vec<f64> = (0..b).map(|j| cos(i, j)).collect();
        let logits: Vec<f64> = c.iter().map(|x| x / temperature).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        loss += max + z.ln() - logits[i];
        for j in 0..b {
            let w = ((logits[j] - max).exp() / z - if i == j { 1.0 } else { 0.0 }) / (temperature * b as f64);
            if w == 0.0 {
                continue;
            }
            let (a, p) = (anchors.row(i).to_vec(), positives.row(j).to_vec());
            for k in 0..a.len() {
                ga.row_mut(i)[k] += w * (p[k] / (an[i] * pn[j]) - c[j] * a[k] / (an[i] * an[i]));
                gp.row_mut(j)[k] += w * (a[k] / (an[i] * pn[j]) - c[j] * p[k] / (pn[j] * pn[j]));
            }
        }
    }
    Ok((loss / b as f64, ga, gp))
}

/// Mean squared error of a one-column prediction and its gradient.
pub fn mse(pred: &Matrix, targets: &[f64]) -> Result<(f64, Matrix)> {
    if pred.cols() != 1 || pred.rows() != targets.len() || targets.is_empty() {
        return Err(shape("predictions must be one column matching the targets"));
    }
    let n = targets.len() as f64;
    let diff: Vec<f64> = pred.as_slice().iter().zip(targets).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, Matrix::from_vec(diff.len(), 1, diff.iter().map(|d| 2.0 * d / n).collect())?))
}

/// Min-max scaling fitted on a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub lo: f64,
    pub hi: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("normalization values"));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { lo, hi })
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.hi > self.lo {
            (x - self.lo) / (self.hi - self.lo)
        } else {
            x - self.lo
        }
    }
}

/// What the value head reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "model", rename_all = "snake_case")]
pub enum Encoder {
    Lpe(LpeModel),
    RawParams { param_count: usize },
}

impl Encoder {
    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::Lpe(m) => m.output_dim(),
            Encoder::RawParams { param_count } => *param_count,
        }
    }

    pub fn embed(&self, policies: &[&DenseNet]) -> Result<Matrix> {
        match self {
            Encoder::Lpe(m) => Ok(m.encode_batch(policies)?.0),
            Encoder::RawParams { param_count } => {
                for p in policies {
                    if p.param_count() != *param_count {
                        return Err(shape("policy parameter count differs from the dataset's"));
                    }
                }
                Matrix::from_rows(&policies.iter().map(|p| p.params()).collect::<Vec<_>>())
            }
        }
    }
}

/// Value loss of the head on top of an LPE encoder, with gradients for the
/// head and for the encoder.
pub fn eval_loss(pevfa: &DenseNet, model: &LpeModel, policies: &[&DenseNet], targets: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (emb, tape) = model.encode_batch(policies)?;
    let (pred, head_tape) = pevfa.forward(&emb)?;
    let (loss, up) = mse(&pred, targets)?;
    let g = pevfa.backward(&head_tape, &up)?;
    let psi = model.backward(&tape, &g.input)?;
    Ok((loss, g.params, psi))
}

/// Alignment loss of a batch of dataset policies and its encoder gradient.
pub fn alignment_loss(model: &LpeModel, dataset: &[PolicyRecord], batch: &[usize], cache: &PairCache, eta: f64) -> Result<(f64, Vec<f64>)> {
    let policies: Vec<&DenseNet> = batch.iter().map(|&i| &dataset[i].policy).collect();
    let (emb, tape) = model.encode_batch(&policies)?;
    let (loss, up) = alignment_loss_embeddings(&emb, batch, cache, eta)?;
    Ok((loss, model.backward(&tape, &up)?))
}

/// Adds `N(0, noise_scale^2)` to every parameter.
pub fn perturb(policy: &DenseNet, noise_scale: f64, rng: &mut crate::rng::Rng) -> Result<DenseNet> {
    let normal = Normal::new(0.0, noise_scale).map_err(|e| invalid(e.to_string()))?;
    let theta: Vec<f64> = policy.params().iter().map(|p| p + normal.sample(rng)).collect();
    DenseNet::unflatten(&theta, policy.architecture())
}

/// Contrastive loss of a batch of policies and its encoder gradient.
pub fn contrastive_loss(
    model: &LpeModel,
    policies: &[&DenseNet],
    temperature: f64,
    noise_scale: f64,
    rng: &mut crate::rng::Rng,
) -> Result<(f64, Vec<f64>)> {
    if policies.len() < 2 {
        return Err(invalid("contrastive loss needs at least one negative"));
    }
    let noisy = policies.iter().map(|p| perturb(p, noise_scale, rng)).collect::<Result<Vec<_>>>()?;
    let all: Vec<&DenseNet> = policies.iter().copied().chain(noisy.iter()).collect();
    let (emb, tape) = model.encode_batch(&all)?;
    let b = policies.len();
    let split = |range: std::ops::Range<usize>| Matrix::from_rows(&range.map(|i| emb.row(i)).collect::<Vec<_>>());
    let (loss, ga, gp) = info_nce(&split(0..b)?, &split(b..2 * b)?, temperature)?;
    let up = Matrix::from_vec(2 * b, emb.cols(), [ga.into_vec(), gp.into_vec()].concat())?;
    Ok((loss, model.backward(&tape, &up)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Optimizer steps, one minibatch each.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub repr_dim: usize,
    pub encoder_hidden: usize,
    pub pevfa_hidden: Vec<usize>,
    /// Keep value-loss gradients out of the encoder.
    pub freeze_encoder_on_eval: bool,
    /// Align only over the training pairs present in the cache instead of
    /// requiring every pair.
    pub partial_pair_cache: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 256,
            lr: DEFAULT_LR,
            repr_dim: DEFAULT_REPR_DIM,
            encoder_hidden: DEFAULT_ENCODER_HIDDEN,
            pevfa_hidden: vec![128, 128],
            freeze_encoder_on_eval: false,
            partial_pair_cache: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    /// Representation objective (alignment or contrastive); zero when absent.
    pub repr_loss: f64,
    pub eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub objective: ReprObjective,
    pub encoder: Encoder,
    pub pevfa: DenseNet,
    pub normalizer: MinMax,
    pub history: Vec<LossRecord>,
}

impl TrainedModel {
    /// Predicted normalized returns.
    pub fn predict(&self, policies: &[&DenseNet]) -> Result<Vec<f64>> {
        let emb = self.encoder.embed(policies)?;
        Ok(self.pevfa.predict(&emb)?.into_vec())
    }

    pub fn embed(&self, policies: &[&DenseNet]) -> Result<Matrix> {
        self.encoder.embed(policies)
    }
}

/// Trains an encoder and value head on `dataset[train]`.
///
/// `cache` must cover all training pairs for `Align`.
pub fn train(
    dataset: &[PolicyRecord],
    train_idx: &[usize],
    objective: ReprObjective,
    cache: Option<&PairCache>,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    objective.validate()?;
    if train_idx.is_empty() || dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let arch = dataset[train_idx[0]].policy.architecture().clone();
    let encoder = match objective {
        ReprObjective::RawParams => Encoder::RawParams { param_count: arch.param_count() },
        _ => Encoder::Lpe(LpeModel::new(arch, cfg.repr_dim, cfg.encoder_hidden, &mut rng_from(derive_seed(cfg.seed, &[1])))?),
    };
    let head_arch = Architecture::mlp(encoder.output_dim(), &cfg.pevfa_hidden, Activation::Relu, 1, Activation::Identity)?;
    let pevfa = DenseNet::init(head_arch, &mut rng_from(derive_seed(cfg.seed, &[2])))?;
    let returns: Vec<f64> = train_idx.iter().map(|&i| dataset[i].mean_return).collect();
    let normalizer = MinMax::fit(&returns)?;
    let align = match objective {
        ReprObjective::Align { kind, eta } => {
            let cache = cache.ok_or_else(|| invalid("alignment training needs a pair cache"))?;
            if cache.kind() != kind {
                return Err(invalid(format!("pair cache holds {} values, objective wants {kind}", cache.kind())));
            }
            if !cfg.partial_pair_cache && !cache.covers(train_idx) {
                return Err(invalid("pair cache does not cover the training set"));
            }
            Some((cache, eta))
        }
        _ => None,
    };
    let mut model = TrainedModel { objective, encoder, pevfa, normalizer, history: Vec::with_capacity(cfg.epochs) };
    let mut head_opt = Adam::new(model.pevfa.param_count(), cfg.lr);
    let mut enc_opt = match &model.encoder {
        Encoder::Lpe(m) => Some(Adam::new(m.param_count(), cfg.lr)),
        Encoder::RawParams { .. } => None,
    };
    let mut batch_rng = rng_from(derive_seed(cfg.seed, &[3]));
    let mut noise_rng = rng_from(derive_seed(cfg.seed, &[4]));
    let b = cfg.batch_size.min(train_idx.len());
    let encoder_trains = !matches!(objective, ReprObjective::Random | ReprObjective::RawParams);
    for step in 0..cfg.epochs {
        let batch: Vec<usize> = sample_without_replacement(&mut batch_rng, train_idx.len(), b).into_iter().map(|k| train_idx[k]).collect();
        let policies: Vec<&DenseNet> = batch.iter().map(|&i| &dataset[i].policy).collect();
        let targets: Vec<f64> = batch.iter().map(|&i| normalizer.apply(dataset[i].mean_return)).collect();
        let mut repr_loss = 0.0;
        let (eval, head_grad) = match &mut model.encoder {
            Encoder::RawParams { .. } => {
                let emb = model.encoder.embed(&policies)?;
                let (pred, tape) = model.pevfa.forward(&emb)?;
                let (loss, up) = mse(&pred, &targets)?;
                (loss, model.pevfa.backward(&tape, &up)?.params)
            }
            Encoder::Lpe(lpe) => {
                let noisy = match objective {
                    ReprObjective::Contrastive { noise_scale, .. } => {
                        policies.iter().map(|p| perturb(p, noise_scale, &mut noise_rng)).collect::<Result<Vec<_>>>()?
                    }
                    _ => Vec::new(),
                };
                let all: Vec<&DenseNet> = policies.iter().copied().chain(noisy.iter()).collect();
                let (emb, tape) = lpe.encode_batch(&all)?;
                let anchors = Matrix::from_rows(&(0..b).map(|i| emb.row(i)).collect::<Vec<_>>())?;
                let (pred, head_tape) = model.pevfa.forward(&anchors)?;
                let (loss, up) = mse(&pred, &targets)?;
                let g = model.pevfa.backward(&head_tape, &up)?;
                let mut emb_grad = Matrix::zeros(emb.rows(), emb.cols());
                if encoder_trains && !(cfg.freeze_encoder_on_eval && align.is_some()) {
                    for i in 0..b {
                        emb_grad.row_mut(i).copy_from_slice(g.input.row(i));
                    }
                }
                if let Some((cache, eta)) = align {
                    let (l, ag) = if cfg.partial_pair_cache {
                        alignment_loss_cached_pairs(&anchors, &batch, cache, eta)?
                    } else {
                        alignment_loss_embeddings(&anchors, &batch, cache, eta)?
                    };
                    repr_loss = l;
                    for i in 0..b {
                        emb_grad.row_mut(i).iter_mut().zip(ag.row(i)).for_each(|(e, a)| *e += a);
                    }
                }
                if let ReprObjective::Contrastive { temperature, .. } = objective {
                    if b >= 2 {
                        let positives = Matrix::from_rows(&(b..2 * b).map(|i| emb.row(i)).collect::<Vec<_>>())?;
                        let (l, ga, gp) = info_nce(&anchors, &positives, temperature)?;
                        repr_loss = l;
                        for i in 0..b {
                            emb_grad.row_mut(i).iter_mut().zip(ga.row(i)).for_each(|(e, a)| *e += a);
                            emb_grad.row_mut(b + i).iter_mut().zip(gp.row(i)).for_each(|(e, a)| *e += a);
                        }
                    }
                }
                if encoder_trains {
                    let psi_grad = lpe.backward(&tape, &emb_grad)?;
                    let mut psi = lpe.flatten();
                    enc_opt.as_mut().expect("lpe optimizer").step(&mut psi, &psi_grad)?;
                    lpe.load(&psi)?;
                }
                (loss, g.params)
            }
        };
        head_opt.step(model.pevfa.params_mut(), &head_grad)?;
        if !eval.is_finite() || !repr_loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at step {step}")));
        }
        model.history.push(LossRecord { step, repr_loss, eval_loss: eval });
    }
    Ok(model)
}
