//! `twinlab`: train and interrogate probabilistic digital twins of survey
//! respondents. Subcommands cover the whole pipeline: generate a synthetic
//! cohort, train the latent-variable model, evaluate it, interpret latent
//! dimensions against response behavior, cluster users, and fit linear
//! baselines.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use twinlab_core::vae::Variant;

#[derive(Parser)]
#[command(
    name = "twinlab",
    version,
    about = "Probabilistic digital-twin modeling pipeline"
)]
struct Cli {
    /// TOML config file; flags override file values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; every random component derives a named substream from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (fallback: $TWINLAB_OUT, then ./out)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with a planted extremity trait
    Synth(SynthArgs),
    /// Train the digital-twin model and write checkpoint + loss traces
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Test latent dimensions against response patterns
    Interpret(InterpretArgs),
    /// Cluster users in latent space and profile the clusters
    Cluster(ClusterArgs),
    /// Fit PCA and factor-analysis baselines
    Baseline(BaselineArgs),
    /// Export a 2-D projection of the latent space
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    Standard,
    Hierarchical,
}

impl From<ModelKind> for Variant {
    fn from(m: ModelKind) -> Variant {
        match m {
            ModelKind::Standard => Variant::Standard,
            ModelKind::Hierarchical => Variant::Hierarchical,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Number of users
    #[arg(long)]
    users: Option<usize>,
    /// Questions answered per user
    #[arg(long)]
    questions: Option<usize>,
    /// Embedding dimension
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Number of latent traits
    #[arg(long)]
    traits: Option<usize>,
    /// Which trait drives answer extremity
    #[arg(long)]
    extremity_trait_index: Option<usize>,
    /// Log-odds shift per unit of the planted trait
    #[arg(long, allow_negative_numbers = true)]
    trait_effect: Option<f64>,
    /// Embedding noise standard deviation
    #[arg(long)]
    noise_sd: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Embeddings CSV (default: [data].embeddings from the config file)
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Model variant
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Width of the top latent code (hierarchical variant)
    #[arg(long)]
    hier_top_dim: Option<usize>,
    /// Fraction of users held out for validation
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Train on raw embeddings instead of standardized ones
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint path (default: <out>/model.ckpt)
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct InterpretArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Response patterns JSON (default: [data].patterns)
    #[arg(long, value_name = "PATH")]
    patterns: Option<PathBuf>,
    /// Extreme-group quantile
    #[arg(long)]
    quantile: Option<f64>,
    /// Family-wise significance level
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k_clusters: Option<usize>,
    /// Comma-separated latent dimensions to test (default: all)
    #[arg(long, value_name = "LIST")]
    dims: Option<String>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    patterns: Option<PathBuf>,
    #[arg(long)]
    k_clusters: Option<usize>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Components for the factor-analysis fit and the projection
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Upper end of the reconstruction-error sweep
    #[arg(long)]
    max_k: Option<usize>,
    /// Checkpoint for the dominant-dimension column (optional)
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Fit on raw embeddings instead of standardized ones
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are successful exits; everything else is
            // a usage error.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    let run = match config::resolve(cli.config.as_deref(), cli.seed, cli.out.as_deref()) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("error: {e}");
            return e.code();
        }
    };

    let result = match cli.command {
        Command::Synth(args) => commands::synth(run, args),
        Command::Train(args) => commands::train(run, args),
        Command::Eval(args) => commands::eval(run, args),
        Command::Interpret(args) => commands::interpret(run, args),
        Command::Cluster(args) => commands::cluster(run, args),
        Command::Baseline(args) => commands::baseline(run, args),
        Command::Report(args) => commands::report(run, args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
