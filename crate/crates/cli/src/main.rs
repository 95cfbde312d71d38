mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emap_core::experiments::ExperimentError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

/// Runtime errors from the library that are not configuration problems.
macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    emap_core::geometry::GeometryError,
    emap_core::tda::TdaError,
    emap_core::gh::GhError,
    emap_core::manifold::ManifoldError,
    emap_core::perturb::PerturbError,
    emap_core::models::ModelError,
    emap_core::explain::ExplainError,
    serde_json::Error,
    std::io::Error
);

#[derive(Debug, Parser)]
#[command(
    name = "emap",
    version,
    about = "Orthogonal manifold perturbations: topology checks and explainer experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed (overrides the config's seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "emap-out")]
    pub out: PathBuf,
    /// Number of trials (overrides the config's n_trials).
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads for the trial pool.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic point cloud.
    Synth { config: PathBuf },
    /// Perturb a cloud, or sample perturbations around one of its points.
    Perturb { config: PathBuf },
    /// Rips persistence diagrams and bottleneck distances.
    Tda { config: PathBuf },
    /// Discrete Gromov-Hausdorff distance of two clouds, or the GH validation
    /// experiment when the config has no `x`/`y` clouds.
    Gh { config: Option<PathBuf> },
    /// Explain one input of a model.
    Explain { config: PathBuf },
    /// Run an experiment config (explainer evaluation when unspecified).
    Eval { config: Option<PathBuf> },
    /// Run the discriminator detectability test.
    Discriminate { config: PathBuf },
    /// Run the bottleneck comparison of perturbation schemes.
    Compare { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    match cli.command {
        Command::Synth { config } => commands::synth(&config, c),
        Command::Perturb { config } => commands::perturb(&config, c),
        Command::Tda { config } => commands::tda(&config, c),
        Command::Gh { config } => commands::gh(config.as_deref(), c),
        Command::Explain { config } => commands::explain(&config, c),
        Command::Eval { config } => commands::experiment(config.as_deref(), None, c),
        Command::Discriminate { config } => commands::experiment(
            Some(&config),
            Some(emap_core::experiments::ExperimentKind::DiscriminatorTest),
            c,
        ),
        Command::Compare { config } => commands::experiment(
            Some(&config),
            Some(emap_core::experiments::ExperimentKind::BottleneckComparison),
            c,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
