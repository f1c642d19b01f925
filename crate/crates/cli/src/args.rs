use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use frog_core::estimation::TailSide;

use crate::plan::PercolationMode;

#[derive(Debug, Parser)]
#[command(name = "frog", version, about = "Monte Carlo experiments for first passage times in the frog model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Sample one environment and write it as a document.
    SampleEnv(RunArgs),
    /// T(0, x) per replica, optionally checked against the Dijkstra oracle.
    Passage(RunArgs),
    /// Time constant estimate from T*(0, k·direction)/k.
    Mu(RunArgs),
    /// Upper or lower deviation tail curve.
    Tails(RunArgs),
    /// Standard deviation of T*(0, x) along a ladder of x.
    Concentration(RunArgs),
    /// Agreement of the truncated passage time with T* over a t ladder.
    Truncation(RunArgs),
    /// Bernoulli hole tails, chemical distances, or white-site marginals.
    Percolation(RunArgs),
    /// Subadditivity, direct-path frequency and analytic tail bounds.
    Audit(RunArgs),
    /// Rerun a plan (or the plan embedded in a report) and rewrite its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
}

/// Execution knobs that do not change any output.
#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Worker threads for the replica pool (all cores when absent).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A plan file, or a report whose embedded plan should be replayed.
    pub path: PathBuf,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// JSON plan file; flags given alongside it take precedence.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Experiment tag mixed into every key (defaults to the command name).
    #[arg(long)]
    pub tag: Option<String>,
    /// e.g. poisson:1, bernoulli:0.7, geometric:0.5, constant:1, pmf:0.2,0.8
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub replica_start: Option<u64>,
    /// Size of a calibration range placed right after the measured replicas.
    #[arg(long)]
    pub calibration: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub x: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Option<Vec<i32>>,
    /// Fixed horizon for every target.
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub horizon_factor: Option<f64>,
    #[arg(long)]
    pub mu_guess: Option<f64>,
    #[arg(long)]
    pub censoring_budget: Option<f64>,
    #[arg(long)]
    pub json: Option<String>,
    #[arg(long)]
    pub csv: Option<String>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub target: Option<Vec<i32>>,
    #[arg(long)]
    pub box_radius: Option<u64>,
    /// Condition the environments on an occupied origin.
    #[arg(long)]
    pub conditioned: bool,
    #[arg(long)]
    pub oracle: Option<bool>,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub side: Option<TailSide>,
    #[arg(long)]
    pub mu_hat: Option<f64>,
    #[arg(long)]
    pub c4_hat: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<PercolationMode>,
    #[arg(long)]
    pub per_norm: Option<u64>,
    #[arg(long)]
    pub bootstrap: Option<u64>,
    #[arg(long)]
    pub spread: Option<u64>,
    #[arg(long)]
    pub direct_path_n: Option<u64>,
    #[arg(long)]
    pub direct_path_trials: Option<u64>,
}
