//! Thin command-line front end over the experiment harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsfilter::harness::{run_experiment, write_results, ExperimentConfig};
use gsfilter::{standard_rule, Error, RuleKind};

#[derive(Parser)]
#[command(
    name = "gsf",
    version,
    about = "Gaussian approximation and smoothing filter benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV results.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's output_dir, then ./results/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print a standard cubature rule as CSV (weight, then coordinates).
    Rules {
        #[arg(long)]
        dim: usize,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["3", "5"]))]
        degree: String,
    },
}

fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) | Error::InvalidDimension(_) | Error::Unsupported(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let config = ExperimentConfig::load(path)?;
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { config } => load(&config).map(|c| {
            println!(
                "ok: {} ({} filters, {} replicates)",
                c.name,
                c.filters.len(),
                c.replicates
            );
        }),
        Command::Run { config, seed, out } => load(&config).and_then(|mut c| {
            if let Some(seed) = seed {
                c.seed = seed;
            }
            let dir = out
                .or_else(|| c.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results").join(&c.name));
            let result = run_experiment(&c)?;
            write_results(&result, &dir)?;
            for (r, label, step, msg) in result.failures() {
                eprintln!("replicate {r}: {label} failed at step {step}: {msg}");
            }
            println!("wrote {}", dir.display());
            Ok(())
        }),
        Command::Rules { dim, degree } => {
            let kind = if degree == "5" {
                RuleKind::Cubature5
            } else {
                RuleKind::Cubature3
            };
            standard_rule(kind, dim, None).map(|rule| {
                let coords: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
                println!("weight,{}", coords.join(","));
                for (j, w) in rule.weights().iter().enumerate() {
                    let p: Vec<String> = rule.point(j).iter().map(|v| v.to_string()).collect();
                    println!("{w},{}", p.join(","));
                }
            })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
