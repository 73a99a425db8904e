//! Command-line front end for g2node: simulate PCFS maps, build datasets, train,
//! evaluate, and forecast full g²(τ, t) maps from measured curves.

pub mod commands;
pub mod config;
pub mod curves;
pub mod matrix;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Malformed or invalid configuration (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Unreadable or inconsistent input data (exit code 3).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return EXIT_CONFIG;
        }
        if cause.is::<DataError>() {
            return EXIT_DATA;
        }
        if let Some(e) = cause.downcast_ref::<g2node::Error>() {
            return match e.kind() {
                g2node::ErrorKind::Config => EXIT_CONFIG,
                g2node::ErrorKind::Data => EXIT_DATA,
                g2node::ErrorKind::Numerical => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_DATA
}

#[derive(Debug, Parser)]
#[command(name = "g2node", version, about = "PCFS g2(tau, t) simulation and neural-ODE forecasting")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (for `eval`: report file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the seed of the command's config section.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// -v for progress, -vv for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one experiment and write its clean, noisy, correlation and interferogram matrices.
    Simulate,
    /// Build a dataset directory.
    Dataset,
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Predict a full map from input curves and recover its spectral correlation.
    Forecast(ForecastArgs),
    /// Score a checkpoint against the persistence baseline.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `lstm-ode` or `resnet1d`
    #[arg(long)]
    pub model: Option<String>,
    /// Train on the time-domain loss only; the Fourier term is still logged.
    #[arg(long)]
    pub no_fourier_loss: bool,
    /// Continue from the state saved in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Contrast used for spectral recovery instead of the training value.
    #[arg(long)]
    pub contrast: Option<f64>,
    /// Proceed when input delays fall outside the training window.
    #[arg(long)]
    pub allow_outside_window: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `train`, `val` or `test`
    #[arg(long)]
    pub split: Option<String>,
}
