//! Maximum mean discrepancy between sample sets under a Gaussian kernel ladder.
//!
//! Kernel values are accumulated in 2^-62 fixed point. Each term is rounded
//! once, after which the sum is exact, so the estimate does not depend on
//! summation order: it is bitwise symmetric in its arguments, invariant to
//! permuting points, and exactly zero for identical sets.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::metrics::MetricKind;
use crate::rng::{rng_from, sample_without_replacement, Rng};

/// Which joint distribution a sample set was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTag {
    StateAction,
    StateNextState,
    StateReturn,
}

impl SampleTag {
    pub fn for_metric(kind: MetricKind) -> Result<Self> {
        match kind {
            MetricKind::DistIrrel => Ok(SampleTag::StateAction),
            MetricKind::InflIrrel => Ok(SampleTag::StateNextState),
            MetricKind::ValueIrrel => Ok(SampleTag::StateReturn),
            other => Err(Error::NoEstimator(other)),
        }
    }
}

/// Points of a common dimension stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    tag: SampleTag,
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(tag: SampleTag, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        if data.len() % dim != 0 {
            return Err(shape(format!("{} values do not split into points of dimension {dim}", data.len())));
        }
        Ok(Self { tag, dim, data })
    }

    pub fn from_points<P: AsRef<[f64]>>(tag: SampleTag, points: &[P]) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("sample set"))?.as_ref().len();
        let mut data = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.as_ref().len() != dim {
                return Err(shape("sample points differ in dimension"));
            }
            data.extend_from_slice(p.as_ref());
        }
        Self::new(tag, dim, data)
    }

    pub fn tag(&self) -> SampleTag {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Draws `m` points: without replacement when more than `m` are held,
    /// with replacement otherwise.
    pub fn subsample(&self, m: usize, rng: &mut Rng) -> Result<SampleSet> {
        if m == 0 {
            return Err(invalid("sample size must be positive"));
        }
        let n = self.len();
        let idx: Vec<usize> = if n > m {
            sample_without_replacement(rng, n, m)
        } else {
            use rand::Rng as _;
            (0..m).map(|_| rng.random_range(0..n)).collect()
        };
        let mut data = Vec::with_capacity(m * self.dim);
        for i in idx {
            data.extend_from_slice(self.point(i));
        }
        Ok(SampleSet { tag: self.tag, dim: self.dim, data })
    }

    /// Rescales the trailing return coordinate of a `StateReturn` set from
    /// `[lo, hi]` to `[0, 1]`. Other tags are returned unchanged.
    pub fn normalize_returns(&self, lo: f64, hi: f64) -> SampleSet {
        let mut out = self.clone();
        if self.tag == SampleTag::StateReturn {
            let span = if hi > lo { hi - lo } else { 1.0 };
            for p in out.data.chunks_exact_mut(self.dim) {
                let g = p.last_mut().expect("dim >= 1");
                *g = (*g - lo) / span;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median of pooled pairwise distances, falling back to 1 when it is 0.
    MedianHeuristic,
}

/// Geometric ladder `sigma * multiplier^(i - count / 2)`, `i in 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub bandwidth: Bandwidth,
    pub multiplier: f64,
    pub count: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { bandwidth: Bandwidth::MedianHeuristic, multiplier: 2.0, count: 5 }
    }
}

impl KernelSpec {
    /// One Gaussian kernel of width `sigma`.
    pub fn single(sigma: f64) -> Self {
        Self { bandwidth: Bandwidth::Fixed(sigma), multiplier: 1.0, count: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || !(self.multiplier > 0.0) || !self.multiplier.is_finite() {
            return Err(invalid("kernel ladder needs count >= 1 and a positive multiplier"));
        }
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0) || !s.is_finite() {
                return Err(invalid(format!("bandwidth {s} must be positive")));
            }
        }
        Ok(())
    }

    pub fn ladder(&self, base: f64) -> Vec<f64> {
        let center = (self.count / 2) as i32;
        (0..self.count as i32).map(|i| base * self.multiplier.powi(i - center)).collect()
    }
}

/// Squared Euclidean distance.
pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("bandwidth {sigma} must be positive")));
    }
    if x.len() != y.len() {
        return Err(shape(format!("points of dimension {} and {}", x.len(), y.len())));
    }
    Ok(kernel_from_sq(squared_distance(x, y), sigma))
}

#[inline]
fn kernel_from_sq(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

const FIXED_SCALE: f64 = (1u64 << 62) as f64;

/// Fixed-point image of a kernel value in `[0, 1]`, rounded half up.
pub fn quantize_kernel(k: f64) -> u64 {
    (k * FIXED_SCALE + 0.5) as u64
}

/// Median of the pairwise distances within `x` followed by `y`.
pub fn median_heuristic(x: &SampleSet, y: &SampleSet) -> f64 {
    let pooled: Vec<&[f64]> = x.points().chain(y.points()).collect();
    let mut d: Vec<f64> = Vec::with_capacity(pooled.len() * (pooled.len().saturating_sub(1)) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(squared_distance(pooled[i], pooled[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, &mut hi, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let med2 = if d.len() % 2 == 1 {
        hi
    } else {
        let lo = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    let med = med2.sqrt();
    if med > 0.0 && med.is_finite() {
        med
    } else {
        1.0
    }
}

const BLOCK: usize = 32;

/// Kernel values of one squared distance across an ascending ladder. With a
/// multiplier of 2 each rung is the fourth power of the next wider one.
#[inline]
fn ladder_kernels(d2: f64, sigmas: &[f64], doubling: bool, out: &mut [u64]) {
    let n = sigmas.len();
    if doubling {
        let mut k = kernel_from_sq(d2, sigmas[n - 1]);
        out[n - 1] = quantize_kernel(k);
        for s in (0..n - 1).rev() {
            k = (k * k) * (k * k);
            out[s] = quantize_kernel(k);
        }
    } else {
        for (o, &sigma) in out.iter_mut().zip(sigmas) {
            *o = quantize_kernel(kernel_from_sq(d2, sigma));
        }
    }
}

fn is_doubling(sigmas: &[f64]) -> bool {
    sigmas.windows(2).all(|w| w[1] == 2.0 * w[0])
}

/// Per-bandwidth fixed-point sums of `k(a_i, b_j)` over all pairs, computed
/// in square blocks.
pub fn kernel_sums(a: &SampleSet, b: &SampleSet, sigmas: &[f64]) -> Vec<u128> {
    let doubling = is_doubling(sigmas);
    let mut sums = vec![0u128; sigmas.len()];
    let mut k = vec![0u64; sigmas.len()];
    for ib in (0..a.len()).step_by(BLOCK) {
        for jb in (0..b.len()).step_by(BLOCK) {
            for i in ib..(ib + BLOCK).min(a.len()) {
                let x = a.point(i);
                for j in jb..(jb + BLOCK).min(b.len()) {
                    ladder_kernels(squared_distance(x, b.point(j)), sigmas, doubling, &mut k);
                    for (s, &v) in sums.iter_mut().zip(&k) {
                        *s += v as u128;
                    }
                }
            }
        }
    }
    sums
}

/// [`kernel_sums`] of a set with itself, visiting each unordered pair once.
fn self_kernel_sums(a: &SampleSet, sigmas: &[f64]) -> Vec<u128> {
    let doubling = is_doubling(sigmas);
    let mut off = vec![0u128; sigmas.len()];
    let mut k = vec![0u64; sigmas.len()];
    for i in 0..a.len() {
        let x = a.point(i);
        for j in i + 1..a.len() {
            ladder_kernels(squared_distance(x, a.point(j)), sigmas, doubling, &mut k);
            for (s, &v) in off.iter_mut().zip(&k) {
                *s += v as u128;
            }
        }
    }
    let diag = quantize_kernel(1.0) as u128 * a.len() as u128;
    off.into_iter().map(|o| 2 * o + diag).collect()
}

fn check_pair(x: &SampleSet, y: &SampleSet) -> Result<()> {
    if x.dim != y.dim {
        return Err(shape(format!("sample sets of dimension {} and {}", x.dim, y.dim)));
    }
    if x.tag != y.tag {
        return Err(invalid(format!("sample sets tagged {:?} and {:?}", x.tag, y.tag)));
    }
    Ok(())
}

/// Bandwidths the estimator uses for this pair.
pub fn resolve_bandwidths(x: &SampleSet, y: &SampleSet, spec: &KernelSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let base = match spec.bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MedianHeuristic => median_heuristic(x, y),
    };
    Ok(spec.ladder(base))
}

/// Biased (V-statistic) squared MMD, averaged over the kernel ladder.
pub fn mmd2_empirical(x: &SampleSet, y: &SampleSet, spec: &KernelSpec) -> Result<f64> {
    check_pair(x, y)?;
    let sigmas = resolve_bandwidths(x, y, spec)?;
    let kxx = self_kernel_sums(x, &sigmas);
    let kyy = self_kernel_sums(y, &sigmas);
    let kxy = kernel_sums(x, y, &sigmas);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let total: f64 = (0..sigmas.len())
        .map(|s| {
            let xx = kxx[s] as f64 / FIXED_SCALE / (n * n);
            let yy = kyy[s] as f64 / FIXED_SCALE / (m * m);
            let xy = kxy[s] as f64 / FIXED_SCALE / (n * m);
            xx + yy - 2.0 * xy
        })
        .sum();
    Ok(total / sigmas.len() as f64)
}

/// Square root of [`mmd2_empirical`], clamped at zero first.
pub fn mmd_empirical(x: &SampleSet, y: &SampleSet, spec: &KernelSpec) -> Result<f64> {
    Ok(mmd2_empirical(x, y, spec)?.max(0.0).sqrt())
}

/// Settings for estimating a policy metric from stored samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmdConfig {
    pub kernel: KernelSpec,
    pub sample_size: usize,
    /// Dataset-wide return range used to rescale `StateReturn` samples.
    pub return_range: Option<(f64, f64)>,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self { kernel: KernelSpec::default(), sample_size: 1000, return_range: None }
    }
}

/// Squared MMD between `m`-point subsamples of two sample sets.
///
/// Both sides are subsampled with streams seeded by `seed`, so a set compared
/// with itself yields zero.
pub fn estimate_from_samples(a: &SampleSet, b: &SampleSet, cfg: &MmdConfig, seed: u64) -> Result<f64> {
    check_pair(a, b)?;
    let xa = a.subsample(cfg.sample_size, &mut rng_from(seed))?;
    let xb = b.subsample(cfg.sample_size, &mut rng_from(seed))?;
    let (xa, xb) = match cfg.return_range {
        Some((lo, hi)) => (xa.normalize_returns(lo, hi), xb.normalize_returns(lo, hi)),
        None => (xa, xb),
    };
    mmd2_empirical(&xa, &xb, &cfg.kernel)
}
