use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "glfm",
    version,
    about = "Latent feature modelling of heterogeneous tables"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sampler and save the final state and the trace.
    Infer(InferArgs),
    /// Impute missing cells, or score held-out cells with `--heldout`.
    Complete(CompleteArgs),
    /// Summarize feature patterns and per-pattern attribute distributions.
    Explore(ExploreArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV table with a header row.
    pub data: PathBuf,
    /// Column declarations, one `name,kind[,categories][,preprocess]` line each.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory (created if needed).
    #[arg(short, long, default_value = "out")]
    pub output: PathBuf,
    /// Cell text marking a missing value, in addition to empty cells.
    #[arg(long)]
    pub missing: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BirthArg {
    Posterior,
    Prior,
}

/// Sampler settings. Unset flags fall back to the config file, then to the
/// built-in defaults.
#[derive(Debug, Args, Default)]
pub struct HyperArgs {
    /// TOML file with sampler settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long = "sigma-b2", allow_hyphen_values = true)]
    pub sigma_b2: Option<f64>,
    #[arg(long = "sigma-y2", allow_hyphen_values = true)]
    pub sigma_y2: Option<f64>,
    #[arg(long = "sigma-u2", allow_hyphen_values = true)]
    pub sigma_u2: Option<f64>,
    #[arg(long = "sigma-theta2", allow_hyphen_values = true)]
    pub sigma_theta2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta2: Option<f64>,
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,
    #[arg(long = "k-init")]
    pub k_init: Option<usize>,
    /// Add a feature active in every row.
    #[arg(long)]
    pub bias: bool,
    /// Resample the pseudo-observation variances.
    #[arg(long = "sample-variance")]
    pub sample_variance: bool,
    #[arg(long = "iters", visible_alias = "iterations")]
    pub iterations: Option<usize>,
    /// Defaults to a fifth of the iterations.
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// How the number of new features per row is drawn.
    #[arg(long, value_enum)]
    pub birth: Option<BirthArg>,
    /// Independent chains run in parallel; the one with the highest final
    /// log joint is kept.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Hold the features of rows whose listed columns all equal
    /// `--pin-label` at zero.
    #[arg(long = "pin-columns", value_delimiter = ',')]
    pub pin_columns: Vec<String>,
    #[arg(long = "pin-label")]
    pub pin_label: Option<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Fraction of observed cells to hide and score.
    #[arg(long, allow_hyphen_values = true)]
    pub heldout: Option<f64>,
    /// Number of random held-out splits.
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    /// Average each held-out likelihood over the last S post-burn-in states.
    #[arg(long, default_value_t = 1)]
    pub average: usize,
    /// Also score a model that treats every attribute as real-valued.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Reuse a saved state instead of running the sampler.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Number of patterns to report.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Grid points for continuous attribute densities.
    #[arg(long = "grid-points", default_value_t = 200)]
    pub grid_points: usize,
}
