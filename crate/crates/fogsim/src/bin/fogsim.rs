//! Command-line front end: load a scenario, run it (or sweep its user
//! counts) against a cloud-only baseline, and write CSV reports.
//!
//! Exit codes: 0 success, 1 bad scenario or failed run, 2 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fogsim::{load_scenario, run_experiment, write_reports, ExperimentResult, ScenarioError};

#[derive(Parser)]
#[command(name = "fogsim", version, about = "Fog topology simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML)
    scenario: PathBuf,
    /// Directory for the CSV reports
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Also write per-run event traces
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario once, at its configured player count
    Run(RunArgs),
    /// Run every user count in the scenario's sweep list
    Sweep(RunArgs),
}

const EXIT_BAD_INPUT: u8 = 1;
const EXIT_IO: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, sweep) = match &cli.command {
        Command::Run(args) => (args, false),
        Command::Sweep(args) => (args, true),
    };

    let mut cfg = match load_scenario(&args.scenario) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                ScenarioError::Io { .. } => EXIT_IO,
                _ => EXIT_BAD_INPUT,
            };
            return ExitCode::from(code);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let user_counts = if sweep {
        cfg.user_counts.clone()
    } else {
        vec![cfg.workload.players]
    };

    let result = match run_experiment(&cfg, &user_counts, args.trace) {
        Ok(result) => result,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_INPUT);
        }
    };
    print_summary(&result);

    match write_reports(&result, &args.out, args.trace) {
        Ok(written) => {
            for path in &written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn print_summary(result: &ExperimentResult) {
    println!(
        "scenario {} : cloud-only baseline vs {}",
        result.scenario_name, result.model_label
    );
    for entry in &result.entries {
        let c = &entry.comparison;
        println!(
            "users={:>4}  cloud={}us  fog={}us  rt_improvement={:.2}%  traffic_reduction={:.2}%",
            entry.users,
            c.baseline_mean_us,
            c.candidate_mean_us,
            c.rt_improvement_pct,
            c.traffic_reduction_pct
        );
    }
}
