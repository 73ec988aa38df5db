//! Command-line pipeline: dataset generation, training, evaluation, and
//! physics checks, each driven by a flat TOML config with seed/out-dir
//! overrides. Exit codes: 0 success, 2 parse/config failure, 3 numeric
//! failure, 4 physics violation.

mod assemble;
mod commands;
mod config;
mod metrics;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iphs::error::{Error, ErrorCategory};

#[derive(Parser)]
#[command(
    name = "iphs",
    version,
    about = "Learn thermodynamically consistent dynamics from trajectory data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic gas-piston dataset (forced + free variants).
    GenerateGas(RunArgs),
    /// Generate the synthetic multi-zone building dataset.
    GenerateBuilding(RunArgs),
    /// Train a structured or baseline model on a dataset.
    Train(RunArgs),
    /// Compute horizon-MAE metrics for a checkpoint on validation chunks.
    Evaluate(RunArgs),
    /// Run the physics-invariant checkers on a checkpoint.
    CheckPhysics(RunArgs),
    /// Fit the lagged linear least-squares baseline.
    BaselineArx(RunArgs),
    /// Train the unconstrained neural-ODE baseline (model field ignored).
    BaselineNode(RunArgs),
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenerateGas(args) => {
            let mut cfg: config::GenerateGasConfig = config::load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = args.out {
                cfg.out = out;
            }
            commands::generate_gas::run(&cfg)
        }
        Command::GenerateBuilding(args) => {
            let mut cfg: config::GenerateBuildingConfig = config::load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = args.out {
                cfg.out = out;
            }
            commands::generate_building::run(&cfg)
        }
        Command::Train(args) => {
            let mut cfg: config::TrainFileConfig = config::load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = args.out {
                cfg.out = out;
            }
            commands::train::run(&cfg)
        }
        Command::Evaluate(args) => {
            let mut cfg: config::EvaluateConfig = config::load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = args.out {
                cfg.out = out;
            }
            commands::evaluate::run(&cfg)
        }
        Command::CheckPhysics(args) => {
            let mut cfg: config::CheckPhysicsConfig = config::load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = args.out {
                cfg.out = out;
            }
            commands::check_physics::run(&cfg)
        }
        Command::BaselineArx(args) => {
            let mut cfg: config::BaselineArxConfig = config::load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = args.out {
                cfg.out = out;
            }
            commands::baseline_arx::run(&cfg)
        }
        Command::BaselineNode(args) => {
            let mut cfg: config::TrainFileConfig = config::load_config(&args.config)?;
            cfg.model = "vanilla-node".into();
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = args.out {
                cfg.out = out;
            }
            commands::train::run(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.category() {
                ErrorCategory::Parse => ExitCode::from(2),
                ErrorCategory::Numeric => ExitCode::from(3),
                ErrorCategory::Physics => ExitCode::from(4),
            }
        }
    }
}
