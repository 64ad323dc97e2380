use policy_abstraction::env::PointEnv;
use policy_abstraction::mdp::gridworld::{build_gridworld, GridKind};
use policy_abstraction::policy_opt::{auc, dges_run, trpo_run, CurvePoint};

use crate::artifacts::{num, OutputDir};
use crate::config::ExperimentConfig;
use crate::error::CliResult;

fn curve_rows(curve: &[CurvePoint]) -> Vec<Vec<String>> {
    curve.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.steps.to_string(), num(c.mean_return)]).collect()
}

pub fn trpo(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let mdp = build_gridworld(GridKind::NDirection, &cfg.trpo.corridor)?;
    let mut summary = Vec::new();
    for &seed in &cfg.seeds {
        let run = trpo_run(&cfg.trpo.run, &mdp, seed)?;
        out.write_csv(&format!("trpo_curve_seed{seed}.csv"), &["iteration", "step", "mean_return"], &curve_rows(&run.curve))?;
        let log: Vec<Vec<String>> = run
            .log
            .iter()
            .map(|e| {
                let est = e.estimate.map(num).unwrap_or_default();
                vec![e.iteration.to_string(), e.update.to_string(), est, e.tripped.to_string()]
            })
            .collect();
        out.write_csv(&format!("trpo_updates_seed{seed}.csv"), &["iteration", "update", "estimate", "tripped"], &log)?;
        summary.push(vec![
            seed.to_string(),
            num(auc(&run.curve)?),
            run.trips().to_string(),
            run.post_trip_updates().to_string(),
            run.log.len().to_string(),
        ]);
    }
    out.write_csv("trpo_summary.csv", &["seed", "auc", "trips", "post_trip_updates", "updates"], &summary)?;
    out.write_json("metadata.json", cfg)?;
    Ok(())
}

pub fn dges(cfg: &ExperimentConfig, out: &mut OutputDir) -> CliResult<()> {
    let env = PointEnv::new(cfg.dges.point.clone())?;
    let mut summary = Vec::new();
    for &seed in &cfg.seeds {
        let run = dges_run(&cfg.dges.run, &env, seed)?;
        out.write_csv(&format!("dges_curve_seed{seed}.csv"), &["generation", "step", "mean_return"], &curve_rows(&run.curve))?;
        let fin = env.final_distance(&run.policy)?;
        let trace = format!("{:016x}", run.param_trace.last().copied().unwrap_or(0));
        summary.push(vec![seed.to_string(), num(fin), num(auc(&run.curve)?), trace]);
    }
    out.write_csv("dges_summary.csv", &["seed", "final_distance", "auc", "final_param_hash"], &summary)?;
    out.write_json("metadata.json", cfg)?;
    Ok(())
}
