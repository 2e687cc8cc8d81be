use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use multiduel_core::runner::{self, ExperimentConfig};
use multiduel_core::PreferenceEnvironment;

#[derive(Parser)]
#[command(
    name = "multiduel",
    version,
    about = "Multi-dueling bandit simulation lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write aggregate.csv, config.toml and optional traces/snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `repetitions`.
        #[arg(long)]
        reps: Option<usize>,
        /// Also write per-repetition cumulative regret to traces.csv.
        #[arg(long)]
        emit_traces: bool,
    },
    /// Print the approximate-linearity constant of the configured environment.
    Gamma {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check that a preference matrix CSV is well formed.
    Validate {
        #[arg(long)]
        matrix: PathBuf,
    },
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run {
            config,
            out,
            seed,
            reps,
            emit_traces,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            if let Some(reps) = reps {
                cfg.repetitions = reps;
            }
            let output = runner::run_experiment_full(&cfg)?;
            let written = runner::emit_results(&output, &out, emit_traces)
                .with_context(|| format!("writing results to {}", out.display()))?;
            let final_mean = output.aggregate.mean.last().copied().unwrap_or(0.0);
            println!(
                "{} repetitions x {} iterations; mean cumulative regret {final_mean:.4}",
                output.aggregate.repetitions, cfg.horizon
            );
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::Gamma { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let env = cfg.build_environment()?;
            println!("{}", env.gamma_lower_bound());
        }
        Command::Validate { matrix } => {
            let env = PreferenceEnvironment::load_matrix(&matrix)?;
            println!(
                "ok: {} arms, Condorcet winner {}",
                env.num_arms(),
                env.best_arm()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
