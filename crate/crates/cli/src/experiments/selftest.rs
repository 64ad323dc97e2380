//! Fast invariant checks over seeded fixtures.

use policy_abstraction::lpe::LpeModel;
use policy_abstraction::mdp::gridworld::{build_gridworld, GridKind, GridParams};
use policy_abstraction::mdp::{TabularMdp, TabularPolicy};
use policy_abstraction::metrics::{exact_metric, fineness_oracle, MetricKind};
use policy_abstraction::mmd::{mmd2_empirical, resolve_bandwidths, KernelSpec, SampleSet, SampleTag};
use policy_abstraction::nn::{grad_check, Activation, Architecture, DenseNet, Matrix};
use policy_abstraction::rng::{derive_seed, rng_from, Rng};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::artifacts::{num, OutputDir};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Outcome of one invariant suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SelftestCheck {
    pub name: &'static str,
    pub cases: usize,
    /// Largest observed deviation from the invariant.
    pub worst: f64,
    pub tolerance: f64,
}

impl SelftestCheck {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

const KINDS: [MetricKind; 5] =
    [MetricKind::DistIrrel, MetricKind::InflIrrel, MetricKind::ValueIrrel, MetricKind::VisitIrrel, MetricKind::ReturnIrrel];

fn random_policy(rng: &mut Rng, n: usize, a: usize) -> TabularPolicy {
    let probs = (0..n)
        .flat_map(|_| {
            let raw: Vec<f64> = (0..a).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(move |x| x / sum)
        })
        .collect();
    TabularPolicy::new(n, a, probs).expect("rows sum to one")
}

fn grids() -> CliResult<Vec<TabularMdp>> {
    let params = GridParams { slip: 0.2, ..GridParams::default() };
    Ok(GridKind::FIGURE_KINDS.iter().map(|&k| build_gridworld(k, &params)).collect::<Result<_, _>>()?)
}

fn metric_axioms(seed: u64) -> CliResult<SelftestCheck> {
    let mut rng = rng_from(derive_seed(seed, &[1]));
    let (mut worst, mut cases) = (0.0f64, 0);
    for mdp in grids()? {
        let (n, a) = (mdp.n_states(), mdp.n_actions());
        for _ in 0..10 {
            let [p, q, r] = [0, 1, 2].map(|_| random_policy(&mut rng, n, a));
            for kind in KINDS {
                let d = |x: &TabularPolicy, y: &TabularPolicy| exact_metric(kind, &mdp, x, y);
                let (pq, qp, pr, qr, pp) = (d(&p, &q)?, d(&q, &p)?, d(&p, &r)?, d(&q, &r)?, d(&p, &p)?);
                worst = worst.max((pq - qp).abs()).max(pp.abs()).max(-pq).max(pr - pq - qr);
                cases += 1;
            }
        }
    }
    Ok(SelftestCheck { name: "metric_axioms", cases, worst, tolerance: 1e-9 })
}

fn fineness(seed: u64) -> CliResult<SelftestCheck> {
    let mut rng = rng_from(derive_seed(seed, &[2]));
    let (mut bad, mut cases) = (0usize, 0);
    for mdp in grids()? {
        let (n, a) = (mdp.n_states(), mdp.n_actions());
        let state_based = mdp.reward().is_state_based();
        for _ in 0..10 {
            let p = random_policy(&mut rng, n, a);
            let q = if rng.random_bool(0.5) { p.clone() } else { random_policy(&mut rng, n, a) };
            bad += fineness_oracle(&mdp, &p, &q)?.violations(state_based).len();
            cases += 1;
        }
    }
    Ok(SelftestCheck { name: "fineness", cases, worst: bad as f64, tolerance: 0.0 })
}

fn gaussian_set(rng: &mut Rng, n: usize, dim: usize, shift: f64) -> SampleSet {
    let data = (0..n * dim).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
    SampleSet::new(SampleTag::StateAction, dim, data).expect("matching length")
}

fn mmd_hand_example() -> CliResult<SelftestCheck> {
    let x = SampleSet::new(SampleTag::StateAction, 1, vec![0.0])?;
    let y = SampleSet::new(SampleTag::StateAction, 1, vec![2.0])?;
    let d = mmd2_empirical(&x, &y, &KernelSpec::single(2.0))?;
    Ok(SelftestCheck { name: "mmd_hand_example", cases: 1, worst: (d - 0.78694).abs(), tolerance: 1e-5 })
}

fn mmd_exact_symmetry(seed: u64) -> CliResult<SelftestCheck> {
    let mut rng = rng_from(derive_seed(seed, &[3]));
    let (mut worst, mut cases) = (0.0f64, 0);
    for (n, m, dim) in [(1, 1, 1), (10, 17, 3), (64, 64, 5)] {
        let x = gaussian_set(&mut rng, n, dim, 0.0);
        let y = gaussian_set(&mut rng, m, dim, 0.5);
        let spec = KernelSpec::default();
        worst = worst.max(mmd2_empirical(&x, &x, &spec)?.abs());
        worst = worst.max((mmd2_empirical(&x, &y, &spec)? - mmd2_empirical(&y, &x, &spec)?).abs());
        cases += 1;
    }
    Ok(SelftestCheck { name: "mmd_identity_symmetry", cases, worst, tolerance: 0.0 })
}

fn mmd_naive(seed: u64) -> CliResult<SelftestCheck> {
    let mut rng = rng_from(derive_seed(seed, &[4]));
    let x = gaussian_set(&mut rng, 64, 4, 0.0);
    let y = gaussian_set(&mut rng, 64, 4, 0.3);
    let spec = KernelSpec::default();
    let sigmas = resolve_bandwidths(&x, &y, &spec)?;
    let mean = |a: &SampleSet, b: &SampleSet| {
        let mut s = 0.0;
        for p in a.points() {
            for q in b.points() {
                let d2: f64 = p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum();
                s += sigmas.iter().map(|sg| (-d2 / (2.0 * sg * sg)).exp()).sum::<f64>() / sigmas.len() as f64;
            }
        }
        s / (a.len() * b.len()) as f64
    };
    let naive = mean(&x, &x) + mean(&y, &y) - 2.0 * mean(&x, &y);
    let worst = (mmd2_empirical(&x, &y, &spec)? - naive).abs();
    Ok(SelftestCheck { name: "mmd_naive_loop", cases: 1, worst, tolerance: 1e-12 })
}

fn network_gradients(seed: u64) -> CliResult<SelftestCheck> {
    let mut rng = rng_from(derive_seed(seed, &[5]));
    let mut worst = 0.0f64;
    let cases = 10;
    for _ in 0..cases {
        let arch = Architecture::mlp(3, &[5, 4], Activation::Tanh, 3, Activation::Softmax)?;
        let net = DenseNet::init(arch.clone(), &mut rng)?;
        let x = Matrix::from_vec(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dot = |y: &Matrix| y.as_slice().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let (_, tape) = net.forward(&x)?;
        let g = net.backward(&tape, &Matrix::from_vec(2, 3, c.clone())?)?;
        worst = worst.max(grad_check(net.params(), &g.params, 1e-6, |theta| {
            dot(&DenseNet::unflatten(theta, &arch).expect("same arch").predict(&x).expect("same shape"))
        }));
    }
    Ok(SelftestCheck { name: "network_gradients", cases, worst, tolerance: 1e-4 })
}

fn permute_units(net: &DenseNet, l: usize, rng: &mut Rng) -> CliResult<DenseNet> {
    let arch = net.architecture().clone();
    let (fan_in, fan_out) = arch.widths().nth(l).expect("layer exists");
    let mut perm: Vec<usize> = (0..fan_out).collect();
    perm.shuffle(rng);
    let off = arch.layer_offset(l);
    let src = net.params();
    let mut theta = src.to_vec();
    for (new_j, &old_j) in perm.iter().enumerate() {
        for i in 0..fan_in {
            theta[off + i * fan_out + new_j] = src[off + i * fan_out + old_j];
        }
        theta[off + fan_in * fan_out + new_j] = src[off + fan_in * fan_out + old_j];
    }
    Ok(DenseNet::unflatten(&theta, &arch)?)
}

fn lpe_invariance(seed: u64) -> CliResult<SelftestCheck> {
    let mut rng = rng_from(derive_seed(seed, &[6]));
    let arch = Architecture::mlp(6, &[8, 8], Activation::Relu, 2, Activation::Tanh)?;
    let model = LpeModel::new(arch.clone(), 16, 16, &mut rng)?;
    let (mut worst, mut cases) = (0.0f64, 0);
    for _ in 0..20 {
        let net = DenseNet::init(arch.clone(), &mut rng)?;
        let base = model.encode(&net)?;
        for k in 0..5 {
            let e = model.encode(&permute_units(&net, k % 3, &mut rng)?)?;
            worst = base.iter().zip(&e).fold(worst, |w, (a, b)| w.max((a - b).abs()));
            cases += 1;
        }
    }
    Ok(SelftestCheck { name: "lpe_permutation_invariance", cases, worst, tolerance: 1e-9 })
}

/// Runs every suite with fixtures derived from `seed`.
pub fn selftest_checks(seed: u64) -> CliResult<Vec<SelftestCheck>> {
    Ok(vec![
        metric_axioms(seed)?,
        fineness(seed)?,
        mmd_hand_example()?,
        mmd_exact_symmetry(seed)?,
        mmd_naive(seed)?,
        network_gradients(seed)?,
        lpe_invariance(seed)?,
    ])
}

pub fn run(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &seed in &cfg.seeds {
        for c in selftest_checks(seed)? {
            if !c.passed() {
                failed.push(format!("{} (seed {seed})", c.name));
            }
            rows.push(vec![
                seed.to_string(),
                c.name.to_string(),
                c.cases.to_string(),
                num(c.worst),
                num(c.tolerance),
                c.passed().to_string(),
            ]);
        }
    }
    out.write_csv("selftest.csv", &["seed", "check", "cases", "worst", "tolerance", "passed"], &rows)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("invariant checks failed: {}", failed.join(", "))))
    }
}
