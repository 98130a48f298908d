use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netprog::commands;
use netprog::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "netprog", version)]
#[command(about = "Fit, simulate, personalize and predict signal propagation on fixed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,

    /// Override every seed in the configuration
    #[arg(long)]
    seed: Option<u64>,

    /// Override the mesh edge-list path
    #[arg(long)]
    mesh: Option<PathBuf>,

    /// Override the dataset path
    #[arg(long)]
    data: Option<PathBuf>,

    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the sampler iteration budget
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate population and individual parameters from a dataset
    Fit(CommonArgs),
    /// Generate a synthetic cohort from known parameters
    Simulate(CommonArgs),
    /// Estimate individual parameters against a fitted model
    Personalize(CommonArgs),
    /// Predict measurement maps at requested times
    Predict(CommonArgs),
    /// Export mean-scenario (or personalized) maps and trajectory curves
    Export(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Fit(a)
            | Command::Simulate(a)
            | Command::Personalize(a)
            | Command::Predict(a)
            | Command::Export(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.command.common();
    let overrides = Overrides {
        seed: args.seed,
        iterations: args.iterations,
        mesh: args.mesh.clone(),
        data: args.data.clone(),
        out: args.out.clone(),
    };
    let result = RunConfig::load(&args.config).and_then(|mut config| {
        config.apply_overrides(&overrides);
        match &cli.command {
            Command::Fit(_) => commands::cmd_fit(&config),
            Command::Simulate(_) => commands::cmd_simulate(&config),
            Command::Personalize(_) => commands::cmd_personalize(&config),
            Command::Predict(_) => commands::cmd_predict(&config),
            Command::Export(_) => commands::cmd_export(&config),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
