use std::path::{Path, PathBuf};

use policy_abstraction::nn::DenseNet;
use policy_abstraction::ope::{
    collect_dataset, default_pair_cache, evaluate, load_dataset, run_ope, save_dataset, trial_split, trial_train_config,
    CollectConfig, OpeConfig, OpeScores,
};
use policy_abstraction::record::PolicyRecord;
use policy_abstraction::repr::{train as train_model, PairCache, ReprObjective, TrainedModel};

use crate::artifacts::{num, OutputDir};
use crate::config::{sha256_hex, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub fn collect(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let cc = CollectConfig { training_seeds: cfg.seeds.clone(), ..cfg.ope.collect.clone() };
    let records = collect_dataset(&cc)?;
    save_dataset(&out.root().join("dataset"), &records)?;
    out.register("dataset/manifest.json")?;
    for i in 0..records.len() {
        out.register(&format!("dataset/record_{i:04}.json"))?;
    }
    let rows: Vec<Vec<String>> = records
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), r.provenance.seed.to_string(), r.provenance.checkpoint.to_string(), num(r.mean_return)])
        .collect();
    out.write_csv("dataset.csv", &["index", "training_seed", "checkpoint", "mean_return"], &rows)?;
    Ok(())
}

fn load(cfg: &ExperimentConfig) -> CliResult<(Vec<PolicyRecord>, String)> {
    let dir = cfg.dataset_dir();
    let records = load_dataset(&dir)?;
    let mut bytes = Vec::new();
    for i in 0..records.len() {
        bytes.extend(std::fs::read(dir.join(format!("record_{i:04}.json")))?);
    }
    Ok((records, sha256_hex(&bytes)))
}

fn eval_config(cfg: &ExperimentConfig, seed: u64) -> OpeConfig {
    OpeConfig { seed, ..cfg.ope.eval.clone() }
}

/// Pair cache for an alignment objective, reused from disk when present.
fn pair_cache(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    data: &[PolicyRecord],
    data_hash: &str,
    objective: ReprObjective,
    ecfg: &OpeConfig,
) -> CliResult<Option<PairCache>> {
    let ReprObjective::Align { kind, .. } = objective else { return Ok(None) };
    let name = format!("pairs-{}-{kind}-{}.json", &data_hash[..16], ecfg.seed);
    let (path, rel): (PathBuf, Option<String>) = match &cfg.ope.pair_cache_dir {
        Some(dir) => (dir.join(&name), None),
        None => (out.root().join("pair_cache").join(&name), Some(format!("pair_cache/{name}"))),
    };
    if path.exists() {
        return Ok(Some(PairCache::from_json(&std::fs::read_to_string(&path)?)?));
    }
    let cache = default_pair_cache(data, kind, ecfg)?;
    match rel {
        Some(rel) => {
            out.write_bytes(&rel, cache.to_json()?.as_bytes())?;
        }
        None => {
            std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
            std::fs::write(&path, cache.to_json()?)?;
        }
    }
    Ok(Some(cache))
}

fn model_name(objective: &ReprObjective, seed: u64, trial: usize) -> String {
    format!("{}_seed{seed}_trial{trial}", objective.label())
}

fn score_row(objective: &ReprObjective, seed: u64, trial: usize, s: &OpeScores) -> Vec<String> {
    vec![objective.label(), seed.to_string(), trial.to_string(), num(s.train_error), num(s.t_error), num(s.g_gap)]
}

const SCORE_HEADER: [&str; 6] = ["objective", "seed", "trial", "train_error", "t_error", "g_gap"];

pub fn train(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let (data, hash) = load(cfg)?;
    let mut scores = Vec::new();
    for &seed in &cfg.seeds {
        let ecfg = eval_config(cfg, seed);
        for objective in &cfg.ope.objectives {
            let cache = pair_cache(cfg, out, &data, &hash, *objective, &ecfg)?;
            for t in 0..ecfg.trials {
                let split = trial_split(&data, &ecfg, t)?;
                let model = train_model(&data, &split.train, *objective, cache.as_ref(), &trial_train_config(&ecfg, t))?;
                let name = model_name(objective, seed, t);
                out.write_json(&format!("models/{name}.json"), &model)?;
                let hist: Vec<Vec<String>> =
                    model.history.iter().map(|h| vec![h.step.to_string(), num(h.repr_loss), num(h.eval_loss)]).collect();
                out.write_csv(&format!("history/{name}.csv"), &["step", "repr_loss", "eval_loss"], &hist)?;
                scores.push(score_row(objective, seed, t, &evaluate(&model, &split, &data)?));
            }
        }
    }
    out.write_csv("ope_scores.csv", &SCORE_HEADER, &scores)?;
    Ok(())
}

fn read_model(path: &Path) -> CliResult<TrainedModel> {
    let text = std::fs::read_to_string(path)?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)?;
    let content = doc.get_mut("content").map(serde_json::Value::take).ok_or_else(|| {
        CliError::Failed(format!("{} is not a model artifact", path.display()))
    })?;
    Ok(serde_json::from_value(content)?)
}

pub fn eval(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let (data, _) = load(cfg)?;
    let models = cfg.ope.models_dir.clone().unwrap_or_default();
    let mut scores = Vec::new();
    for &seed in &cfg.seeds {
        let ecfg = eval_config(cfg, seed);
        for objective in &cfg.ope.objectives {
            for t in 0..ecfg.trials {
                let model = read_model(&models.join(format!("{}.json", model_name(objective, seed, t))))?;
                let split = trial_split(&data, &ecfg, t)?;
                scores.push(score_row(objective, seed, t, &evaluate(&model, &split, &data)?));
            }
        }
    }
    out.write_csv("ope_scores.csv", &SCORE_HEADER, &scores)?;
    Ok(())
}

pub fn table(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let (data, hash) = load(cfg)?;
    let splits: Vec<(policy_abstraction::ope::SplitMode, f64)> = if cfg.ope.table_splits.is_empty() {
        vec![(cfg.ope.eval.mode, cfg.ope.eval.ratio)]
    } else {
        cfg.ope.table_splits.iter().map(|s| (s.mode, s.ratio)).collect()
    };
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        for objective in &cfg.ope.objectives {
            let cache = pair_cache(cfg, out, &data, &hash, *objective, &eval_config(cfg, seed))?;
            for &(mode, ratio) in &splits {
                let ecfg = OpeConfig { mode, ratio, ..eval_config(cfg, seed) };
                let row = run_ope(&data, *objective, &ecfg, cache.as_ref())?;
                rows.push(vec![
                    row.objective,
                    mode.to_string(),
                    num(ratio),
                    seed.to_string(),
                    row.trials.to_string(),
                    num(row.t_error_mean),
                    num(row.t_error_std),
                    num(row.g_gap_mean),
                    num(row.g_gap_std),
                ]);
            }
        }
    }
    let header = ["objective", "mode", "ratio", "seed", "trials", "t_error_mean", "t_error_std", "g_gap_mean", "g_gap_std"];
    out.write_csv("ope_table.csv", &header, &rows)?;
    Ok(())
}

pub fn embed(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let (data, hash) = load(cfg)?;
    let policies: Vec<&DenseNet> = data.iter().map(|r| &r.policy).collect();
    for &seed in &cfg.seeds {
        let ecfg = eval_config(cfg, seed);
        for objective in &cfg.ope.objectives {
            let cache = pair_cache(cfg, out, &data, &hash, *objective, &ecfg)?;
            let split = trial_split(&data, &ecfg, 0)?;
            let model = train_model(&data, &split.train, *objective, cache.as_ref(), &trial_train_config(&ecfg, 0))?;
            let emb = model.embed(&policies)?;
            let mut header: Vec<String> = ["index", "mean_return", "part"].iter().map(|s| s.to_string()).collect();
            header.extend((0..emb.cols()).map(|k| format!("e{k}")));
            let rows: Vec<Vec<String>> = (0..data.len())
                .map(|i| {
                    let part = if split.train.binary_search(&i).is_ok() { "train" } else { "test" };
                    let mut r = vec![i.to_string(), num(data[i].mean_return), part.to_string()];
                    r.extend(emb.row(i).iter().map(|&x| num(x)));
                    r
                })
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.write_csv(&format!("embeddings_{}_seed{seed}.csv", objective.label()), &header, &rows)?;
        }
    }
    Ok(())
}
