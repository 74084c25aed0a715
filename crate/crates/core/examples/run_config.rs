//! Runs an experiment config and writes its CSV tables.
//!
//! `cargo run --release --example run_config -- configs/tracking.json out/tracking`

use std::path::PathBuf;

use gsfilter::harness::{run_experiment, write_results, ExperimentConfig};

fn main() -> gsfilter::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| {
        concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/configs/bistable_transition.json"
        )
        .into()
    }));
    let config = ExperimentConfig::load(&path)?;
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gsfilter").join(&config.name));
    let result = run_experiment(&config)?;
    write_results(&result, &out)?;
    println!(
        "{:<12} {:<10} {:>12} {:>12}",
        "filter", "metric", "mean rmse", "var rmse"
    );
    for row in result.summary() {
        println!(
            "{:<12} {:<10} {:>12.4} {:>12.4e}",
            row.filter, row.metric, row.mean_rmse, row.var_rmse
        );
    }
    println!("\nCSV files in {}", out.display());
    Ok(())
}
