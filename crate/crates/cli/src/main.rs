mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::CliError;

/// Weighted k-NN taste recommendation: evaluation, advice networks and
/// homophily on group-labelled rating data.
#[derive(Debug, Parser)]
#[command(name = "tastenet", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; for `synth`, the ratings file to write.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the number of evaluation repetitions.
    #[arg(long, global = true)]
    repetitions: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, validate and filter a ratings CSV; write it back with a summary.
    Ingest(IngestArgs),
    /// Generate a synthetic population.
    Synth(SynthArgs),
    /// Pairwise-choice accuracy over the (k, rho, pool) grid.
    Evaluate(EvaluateArgs),
    /// Predictions with their committees for one target.
    Predict(PredictArgs),
    /// Build or export advice networks.
    #[command(subcommand)]
    Network(NetworkCommand),
    /// Homophily index over the (k, rho) grid.
    Homophily(HomophilyArgs),
    /// Similarity matrix and per-rater correlation profiles.
    Similarity(DataArgs),
    /// Every figure input for one grid, with a manifest.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Ratings CSV (`rater_id,item_id,rating,group`).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub min_item_reviews: Option<usize>,
    #[arg(long)]
    pub min_rater_ratings: Option<usize>,
    /// Groups exempt from the per-rater minimum (repeatable).
    #[arg(long = "protect")]
    pub protect: Vec<String>,
    /// Accepted group labels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Spec file (`key = value` lines); defaults to the built-in spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Also write the noise-free utilities here.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Comma-separated k values; `N-1` means everyone else.
    #[arg(long)]
    pub k: Option<String>,
    /// Comma-separated rho values.
    #[arg(long)]
    pub rho: Option<String>,
    /// Adviser pools (repeatable): `all` or groups joined with `+`.
    #[arg(long = "pool")]
    pub pools: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub holdout: Option<usize>,
    /// Restrict targets to these groups (`all` or joined with `+`).
    #[arg(long)]
    pub targets: Option<String>,
    /// Skip negative-weight advisers when filling committees.
    #[arg(long)]
    pub skip_negative: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CellArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub pool: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cell: CellArgs,
    #[arg(long)]
    pub target: String,
    /// Items to predict (repeatable); default is every item the target
    /// has not rated.
    #[arg(long = "item")]
    pub items: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum NetworkCommand {
    /// First-call network of top-k advisers.
    Potential {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cell: CellArgs,
    },
    /// Network of committees that actually supplied ratings.
    Influence {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cell: CellArgs,
        /// Restrict to one item.
        #[arg(long)]
        item: Option<String>,
        /// Redraw a per-rater holdout every repetition and average.
        #[arg(long)]
        coupled_holdout: bool,
        #[arg(long)]
        holdout: Option<usize>,
    },
    /// Convert a network JSON for display.
    Export {
        /// Network JSON written by `potential` or `influence`.
        #[arg(long)]
        network: PathBuf,
        #[arg(long, value_enum)]
        format: ExportFormat,
        /// Drop edges lighter than this (display only).
        #[arg(long)]
        min_weight: Option<f64>,
        /// Long performance CSV to annotate DOT nodes with accuracy.
        #[arg(long)]
        accuracy: Option<PathBuf>,
        /// Output file (default: next to the network, new extension).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Csv,
    Dot,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Influence,
    Potential,
    Both,
}

#[derive(Debug, Args)]
pub struct HomophilyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub pool: Option<String>,
    #[arg(long, value_enum, default_value = "both")]
    pub variant: Variant,
    #[arg(long)]
    pub coupled_holdout: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Items for per-item networks (repeatable).
    #[arg(long = "item")]
    pub items: Vec<String>,
}

/// Resolved settings shared by all commands.
pub struct Context {
    pub cfg: RunConfig,
    /// Set when `--out` was given explicitly.
    pub out_flag: Option<PathBuf>,
    /// Set when `--seed` was given explicitly.
    pub seed_flag: Option<u64>,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(r) = cli.repetitions {
        cfg.evaluation.repetitions = r;
    }
    if let (Some(o), false) = (&cli.out, matches!(cli.command, Command::Synth(_))) {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    Ok(Context { cfg, out_flag: cli.out.clone(), seed_flag: cli.seed })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = context(&cli)?;
    match cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, &a),
        Command::Synth(a) => commands::synth(&ctx, &a),
        Command::Evaluate(a) => commands::evaluate(&ctx, &a),
        Command::Predict(a) => commands::predict(&ctx, &a),
        Command::Network(n) => commands::network(&ctx, &n),
        Command::Homophily(a) => commands::homophily(&ctx, &a),
        Command::Similarity(a) => commands::similarity(&ctx, &a),
        Command::Report(a) => commands::report(&ctx, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tastenet: {e}");
            ExitCode::from(e.kind.exit_code())
        }
    }
}
