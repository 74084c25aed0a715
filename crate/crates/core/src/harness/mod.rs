//! Experiment runner: JSON configs, seeded replicate grids, RMSE tables, CSV output.

mod config;
mod output;
mod run;

pub use config::{BistableTestbed, ExperimentConfig, PriorConfig, TestbedConfig};
pub use output::{curves_csv, per_step_csv, summary_csv, write_results};
pub use run::{
    mean_and_variance, replicate_seed, rmse, run_experiment, splitmix64, sub_seed, FilterResult,
    Metric, ReplicateResult, RunResult, SummaryRow,
};
