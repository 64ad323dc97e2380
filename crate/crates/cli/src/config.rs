use std::path::{Path, PathBuf};

use policy_abstraction::env::PointEnvParams;
use policy_abstraction::mdp::gridworld::{GridKind, GridParams};
use policy_abstraction::metrics::MetricKind;
use policy_abstraction::ope::{CollectConfig, OpeConfig, SplitMode};
use policy_abstraction::policy_opt::{EsConfig, TrustRegionConfig};
use policy_abstraction::repr::ReprObjective;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation, CliError, CliResult};

/// Environment variable that replaces the seed list with a single seed.
pub const SEED_ENV: &str = "PABS_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    GridworldMetrics,
    Trpo,
    Dges,
    OpeCollect,
    OpeTrain,
    OpeEval,
    OpeTable,
    OpeEmbed,
    Selftest,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::GridworldMetrics => "gridworld-metrics",
            Experiment::Trpo => "trpo",
            Experiment::Dges => "dges",
            Experiment::OpeCollect => "ope-collect",
            Experiment::OpeTrain => "ope-train",
            Experiment::OpeEval => "ope-eval",
            Experiment::OpeTable => "ope-table",
            Experiment::OpeEmbed => "ope-embed",
            Experiment::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridworldSection {
    pub environments: Vec<GridKind>,
    pub epsilons: Vec<f64>,
    pub params: GridParams,
}

impl Default for GridworldSection {
    fn default() -> Self {
        Self {
            environments: GridKind::FIGURE_KINDS.to_vec(),
            epsilons: (0..10).map(|i| i as f64 / 10.0).collect(),
            params: GridParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrpoSection {
    pub corridor: GridParams,
    pub run: TrustRegionConfig,
}

impl Default for TrpoSection {
    fn default() -> Self {
        Self { corridor: GridParams::default(), run: TrustRegionConfig { mmd_sample_size: 50, ..TrustRegionConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgesSection {
    pub point: PointEnvParams,
    pub run: EsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpeSection {
    /// Dataset read by the training and evaluation steps; `ope-collect`
    /// writes to `<output_dir>/dataset` when unset.
    pub dataset_dir: Option<PathBuf>,
    /// Models read by `ope-eval`.
    pub models_dir: Option<PathBuf>,
    /// Where alignment pair caches are stored and reused.
    pub pair_cache_dir: Option<PathBuf>,
    pub collect: CollectConfig,
    pub objectives: Vec<ReprObjective>,
    pub eval: OpeConfig,
    /// Splits tabulated by `ope-table`; empty means the one in `eval`.
    pub table_splits: Vec<SplitSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub ratio: f64,
}

pub fn all_objectives() -> Vec<ReprObjective> {
    let mut v = vec![
        ReprObjective::RawParams,
        ReprObjective::Random,
        ReprObjective::EndToEnd,
        ReprObjective::Contrastive { temperature: 0.1, noise_scale: 1e-2 },
    ];
    v.extend(MetricKind::ESTIMABLE.iter().map(|&kind| ReprObjective::Align { kind, eta: 1.0 }));
    v
}

impl Default for OpeSection {
    fn default() -> Self {
        Self {
            dataset_dir: None,
            models_dir: None,
            pair_cache_dir: None,
            collect: CollectConfig::default(),
            objectives: all_objectives(),
            eval: OpeConfig::default(),
            table_splits: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub gridworld: GridworldSection,
    pub trpo: TrpoSection,
    pub dges: DgesSection,
    pub ope: OpeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::default(),
            seeds: vec![0],
            output_dir: PathBuf::from("pabs-out"),
            gridworld: GridworldSection::default(),
            trpo: TrpoSection::default(),
            dges: DgesSection::default(),
            ope: OpeSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse { path: origin.to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Replaces the seed list when the seed environment variable is set.
    pub fn apply_seed_env(&mut self) -> CliResult<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v.trim().parse().map_err(|_| validation(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(validation("seed list is empty"));
        }
        match self.experiment {
            Experiment::GridworldMetrics => {
                if self.gridworld.environments.is_empty() {
                    return Err(validation("no environments listed"));
                }
                if let Some(e) = self.gridworld.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                    return Err(validation(format!("stochasticity {e} outside [0, 1]")));
                }
            }
            Experiment::Trpo => self.trpo.run.validate().map_err(validation)?,
            Experiment::Dges => self.dges.run.validate().map_err(validation)?,
            Experiment::OpeCollect => self.ope.collect.validate().map_err(validation)?,
            Experiment::OpeTrain | Experiment::OpeEval | Experiment::OpeTable | Experiment::OpeEmbed => {
                if self.ope.objectives.is_empty() {
                    return Err(validation("no objectives listed"));
                }
                for o in &self.ope.objectives {
                    o.validate().map_err(validation)?;
                }
                let ratios = std::iter::once(self.ope.eval.ratio).chain(self.ope.table_splits.iter().map(|s| s.ratio));
                for r in ratios {
                    if !(r > 0.0 && r <= 0.8) {
                        return Err(validation(format!("split ratio {r} outside (0, 0.8]")));
                    }
                }
                if self.ope.eval.trials == 0 {
                    return Err(validation("at least one trial is required"));
                }
                if self.experiment == Experiment::OpeEval && self.ope.models_dir.is_none() {
                    return Err(validation("ope-eval needs ope.models_dir"));
                }
            }
            Experiment::Selftest => {}
        }
        Ok(())
    }

    /// The resolved configuration as written next to the artifacts.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Failed(format!("cannot serialize configuration: {e}")))
    }

    /// Hex SHA-256 of [`Self::to_toml`] with the output directory blanked,
    /// so reruns into another directory carry the same hash.
    pub fn hash(&self) -> CliResult<String> {
        let blank = Self { output_dir: PathBuf::new(), ..self.clone() };
        Ok(sha256_hex(blank.to_toml()?.as_bytes()))
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.ope.dataset_dir.clone().unwrap_or_else(|| self.output_dir.join("dataset"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
