//! Command-line runner for the policy-abstraction experiments.
//!
//! Every run reads a TOML configuration (or defaults), applies the seed
//! environment variable and command-line overrides, then writes CSV and JSON
//! artifacts plus a manifest into its output directory.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiments;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use policy_abstraction::metrics::MetricKind;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pabs", version, about = "Policy-abstraction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs the experiment named in a configuration file.
    Run {
        #[arg(id = "config_file", value_name = "CONFIG")]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Exact metrics over the stochasticity sweep.
    GridworldMetrics(Overrides),
    /// Trust-region policy optimization on the corridor.
    Trpo(Overrides),
    /// Diversity-guided evolution strategies on the point maze.
    Dges(Overrides),
    /// Collects an offline policy dataset.
    OpeCollect(Overrides),
    /// Trains value predictors per objective and trial.
    OpeTrain(Overrides),
    /// Scores saved value predictors.
    OpeEval(Overrides),
    /// Aggregates errors per objective and split.
    OpeTable(Overrides),
    /// Dumps policy embeddings.
    OpeEmbed(Overrides),
    /// Runs the invariant checks.
    Selftest(Overrides),
}

/// Flags that take precedence over the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration; defaults are used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed list; repeat the flag for several seeds.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Constraint or diversity metric: pi, ppi, vpi or none.
    #[arg(long)]
    pub metric: Option<String>,
    /// Trust-region radius.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// Diversity weight.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Ratio between neighbouring kernel bandwidths.
    #[arg(long, allow_hyphen_values = true)]
    pub kernel_mu: Option<f64>,
    /// Number of kernel bandwidths.
    #[arg(long)]
    pub kernel_count: Option<usize>,
    /// Points per side of each MMD estimate.
    #[arg(long)]
    pub sample_size: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> CliResult<()> {
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(m) = &self.metric {
            let metric = match m.as_str() {
                "none" => None,
                s => Some(s.parse::<MetricKind>().map_err(|e| CliError::Validation(e.to_string()))?),
            };
            cfg.trpo.run.metric = metric;
            cfg.dges.run.metric = metric;
        }
        if let Some(s) = self.sigma {
            cfg.trpo.run.sigma = s;
        }
        if let Some(b) = self.beta {
            cfg.dges.run.beta = b;
        }
        let kernels = [&mut cfg.trpo.run.kernel, &mut cfg.dges.run.kernel, &mut cfg.ope.eval.mmd.kernel];
        for k in kernels {
            if let Some(mu) = self.kernel_mu {
                k.multiplier = mu;
            }
            if let Some(c) = self.kernel_count {
                k.count = c;
            }
        }
        if let Some(m) = self.sample_size {
            cfg.trpo.run.mmd_sample_size = m;
            cfg.ope.eval.mmd.sample_size = m;
        }
        Ok(())
    }
}

/// Resolves the configuration a command line describes.
pub fn resolve(command: &Command) -> CliResult<ExperimentConfig> {
    let (fixed, overrides) = match command {
        Command::Run { config, overrides } => (None, Overrides { config: Some(config.clone()), ..overrides.clone() }),
        Command::GridworldMetrics(o) => (Some(Experiment::GridworldMetrics), o.clone()),
        Command::Trpo(o) => (Some(Experiment::Trpo), o.clone()),
        Command::Dges(o) => (Some(Experiment::Dges), o.clone()),
        Command::OpeCollect(o) => (Some(Experiment::OpeCollect), o.clone()),
        Command::OpeTrain(o) => (Some(Experiment::OpeTrain), o.clone()),
        Command::OpeEval(o) => (Some(Experiment::OpeEval), o.clone()),
        Command::OpeTable(o) => (Some(Experiment::OpeTable), o.clone()),
        Command::OpeEmbed(o) => (Some(Experiment::OpeEmbed), o.clone()),
        Command::Selftest(o) => (Some(Experiment::Selftest), o.clone()),
    };
    let mut cfg = match &overrides.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = fixed {
        cfg.experiment = e;
    }
    cfg.apply_seed_env()?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let result = resolve(&cli.command).and_then(|cfg| {
        let entries = experiments::run(&cfg)?;
        println!("{}: wrote {} artifacts to {}", cfg.experiment.name(), entries.len(), cfg.output_dir.display());
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
