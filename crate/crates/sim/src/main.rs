use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpmnl_sim::config::ExperimentConfig;
use dpmnl_sim::replay::{fit_ground_truth, ReplayData};
use dpmnl_sim::results::emit;
use dpmnl_sim::{run_experiment, SimError};

#[derive(Parser)]
#[command(name = "dpmnl", version, about = "Regret simulations for the DPMNL bandit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the base arm of a config.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. --set T=5000 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the cartesian grid of the sweep_* keys.
    Sweep {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a config and print it fully resolved.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Fit a ground-truth parameter to a replay CSV with a chosen column.
    FitGroundTruth { csv: PathBuf },
}

fn load(path: &PathBuf, overrides: &[String]) -> Result<ExperimentConfig, SimError> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cfg: &ExperimentConfig, sweep: bool) -> Result<(), SimError> {
    let arms = cfg.arms(sweep)?;
    let n = arms.len();
    let results = run_experiment(cfg, arms)?;
    emit(&results, cfg, &cfg.output_dir)?;
    for (a, arm) in results.arms.iter().enumerate() {
        let s = results.final_stats(a);
        println!("{:<40} final regret {:.4} ± {:.4} (n = {})", arm.label, s.mean, s.band(), s.n);
    }
    let failed = results.failures().count();
    if failed > 0 {
        eprintln!("{failed} replicate(s) failed, see audit.log");
    }
    println!("{n} arm(s) written to {}", cfg.output_dir.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Run { config, overrides } => simulate(&load(&config, &overrides)?, false),
        Command::Sweep { config, overrides } => simulate(&load(&config, &overrides)?, true),
        Command::Validate { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            print!("{}", cfg.snapshot());
            Ok(())
        }
        Command::FitGroundTruth { csv } => {
            let data = ReplayData::from_path(&csv)?;
            let theta = fit_ground_truth(&data)?;
            let parts: Vec<String> = theta.as_slice().iter().map(|v| format!("{v:.16e}")).collect();
            println!("theta_star = {}", parts.join(","));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                SimError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
