//! Flags. Every value-bearing flag is optional so that unset flags fall
//! through to the config file and then to the defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "noisy-mdp", version, about = "Bayesian inference of value functions from noisy decisions")]
pub struct Cli {
    /// Overrides the seed of the resolved configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON config file, or a `run.json` from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset of noisy decisions.
    Generate(GenerateArgs),
    /// Run the Gibbs sampler on a dataset.
    Infer(InferArgs),
    /// MAP predictions of held-out decisions from a posterior.
    Predict(PredictArgs),
    /// Serve record and mimic sessions over WebSocket.
    Serve(ServeArgs),
    /// Run a scripted experiment end to end.
    Replicate(ReplicateArgs),
    /// Summaries, autocorrelations, traces and histograms of posteriors.
    Diag(DiagArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Tetris,
    Tabular,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub env: Option<Environment>,
    /// Value function, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v: Option<Vec<f64>>,
    /// Number of observations.
    #[arg(long, short = 'T')]
    pub observations: Option<usize>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Stop at the first game over instead of restarting.
    #[arg(long)]
    pub no_restart: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Dataset (JSON Lines).
    pub data: Option<PathBuf>,
    /// Use only the first N observations.
    #[arg(long)]
    pub head: Option<usize>,
    /// none, scale, translate or scale+translate.
    #[arg(long)]
    pub moves: Option<String>,
    /// Prior variance, or `inf`.
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub ig_a: Option<f64>,
    #[arg(long)]
    pub ig_b: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thinning: Option<usize>,
    /// exact or metropolis_hastings.
    #[arg(long)]
    pub step1: Option<String>,
    #[arg(long)]
    pub max_lag: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    /// Held-out dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Skip the first N observations of the dataset.
    #[arg(long)]
    pub from: Option<usize>,
    /// Evenly spaced posterior draws voting per prediction.
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    /// Posterior enabling mimic sessions.
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    #[arg(long)]
    pub mimic_interval_ms: Option<u64>,
    #[arg(long)]
    pub mimic_draws: Option<usize>,
    #[arg(long)]
    pub max_blocks: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Toy,
    Exp1,
    Exp2Protocol,
    Exp3Protocol,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// One or more posterior files; several are compared lag by lag.
    pub posteriors: Vec<PathBuf>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
}
