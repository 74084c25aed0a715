use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::RunResult;
use crate::error::Result;

const PER_STEP_HEADER: &str = "replicate,filter,step,time,rmse,fallbacks,jitters\n";

fn per_step_table(result: &RunResult, metric: usize) -> String {
    let metric = &result.metrics[metric];
    let mut out = String::from(PER_STEP_HEADER);
    for (r, rep) in result.replicates.iter().enumerate() {
        for (f, filt) in rep.filters.iter().enumerate() {
            let errors = result.errors(r, f, metric);
            for (i, (err, diag)) in errors.iter().zip(&filt.diagnostics).enumerate() {
                let step = i + 1;
                let time = step as f64 * result.obs_interval;
                writeln!(
                    out,
                    "{r},{},{step},{time},{err},{},{}",
                    filt.label, diag.fallbacks, diag.jitters
                )
                .unwrap();
            }
        }
    }
    out
}

/// `per_step.csv` content for the full-state metric.
pub fn per_step_csv(result: &RunResult) -> String {
    per_step_table(result, 0)
}

pub fn summary_csv(result: &RunResult) -> String {
    let mut out = String::from("filter,metric,mean_rmse,var_rmse\n");
    for row in result.summary() {
        writeln!(
            out,
            "{},{},{},{}",
            row.filter, row.metric, row.mean_rmse, row.var_rmse
        )
        .unwrap();
    }
    out
}

/// RMSE across replicates at each step.
pub fn curves_csv(result: &RunResult) -> String {
    let mut out = String::from("filter,metric,step,time,rmse\n");
    for (f, label) in result.labels.iter().enumerate() {
        for metric in &result.metrics {
            for (i, e) in result.per_step_rmse(f, metric).iter().enumerate() {
                let step = i + 1;
                let time = step as f64 * result.obs_interval;
                writeln!(out, "{label},{},{step},{time},{e}", metric.name).unwrap();
            }
        }
    }
    out
}

/// Writes `per_step.csv`, `summary.csv`, `config_echo` and `curves.csv` into
/// `dir`. Tracking runs also get `per_step_<metric>.csv` for the position,
/// velocity and turn-rate groups, and any filter failures go to `failures.csv`.
pub fn write_results(result: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("per_step.csv"), per_step_csv(result))?;
    fs::write(dir.join("summary.csv"), summary_csv(result))?;
    fs::write(dir.join("curves.csv"), curves_csv(result))?;
    fs::write(dir.join("config_echo"), result.config.to_json())?;
    for (m, metric) in result.metrics.iter().enumerate().skip(1) {
        fs::write(
            dir.join(format!("per_step_{}.csv", metric.name)),
            per_step_table(result, m),
        )?;
    }
    let mut failures = String::new();
    for (r, label, step, msg) in result.failures() {
        writeln!(failures, "{r},{label},{step},\"{}\"", msg.replace('"', "'")).unwrap();
    }
    if !failures.is_empty() {
        fs::write(
            dir.join("failures.csv"),
            format!("replicate,filter,step,error\n{failures}"),
        )?;
    }
    Ok(())
}
