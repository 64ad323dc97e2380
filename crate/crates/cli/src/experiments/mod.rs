//! One entry point per experiment kind.

mod gridworld;
mod ope;
mod policy_opt;
mod selftest;

pub use selftest::{selftest_checks, SelftestCheck};

use crate::artifacts::{ArtifactEntry, OutputDir};
use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliResult;

/// Validates `cfg`, runs it and writes the artifacts plus manifest.
pub fn run(cfg: &ExperimentConfig) -> CliResult<Vec<ArtifactEntry>> {
    cfg.validate()?;
    let mut out = OutputDir::create(cfg)?;
    match cfg.experiment {
        Experiment::GridworldMetrics => gridworld::run(cfg, &mut out)?,
        Experiment::Trpo => policy_opt::trpo(cfg, &mut out)?,
        Experiment::Dges => policy_opt::dges(cfg, &mut out)?,
        Experiment::OpeCollect => ope::collect(cfg, &mut out)?,
        Experiment::OpeTrain => ope::train(cfg, &mut out)?,
        Experiment::OpeEval => ope::eval(cfg, &mut out)?,
        Experiment::OpeTable => ope::table(cfg, &mut out)?,
        Experiment::OpeEmbed => ope::embed(cfg, &mut out)?,
        Experiment::Selftest => selftest::run(cfg, &mut out)?,
    }
    out.finish(cfg)
}
