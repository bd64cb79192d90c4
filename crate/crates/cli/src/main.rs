mod commands;
mod config;
mod manifest;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    pub fn input(path: &Path, e: impl Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn output(path: &Path, e: impl Display) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn stage(e: impl Display) -> Self {
        CliError::Stage(e.to_string())
    }

    fn category(&self) -> &'static str {
        match self {
            CliError::Input { .. } => "input",
            CliError::Output { .. } => "output",
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Stage(_) => "stage",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Economic knowledge-graph pipeline: corpus ingestion, lexicon
/// bootstrapping, coreference, triple extraction, graph building, variable
/// selection and forecasting.
#[derive(Debug, Parser)]
#[command(name = "econkg", version, arg_required_else_help = true)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split and tokenize a JSONL corpus.
    Ingest(IngestArgs),
    /// Grow seed lexicons with labelled candidate batches.
    Bootstrap(BootstrapArgs),
    /// Propose duplicate entities and apply merge decisions.
    Coref(CorefArgs),
    /// Extract deduplicated triples.
    Extract(ExtractArgs),
    /// Build the knowledge graph from triples.
    Graph(GraphArgs),
    /// List variables linked to a target in the graph.
    Select(SelectArgs),
    /// Run the baseline vs knowledge-graph forecasting experiment.
    Forecast(ForecastArgs),
    /// Serve the curation API.
    Serve(ServeArgs),
    /// Run the bundled worked example end to end.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Format {
    #[default]
    Auto,
    Plain,
    PreTokenized,
}

#[derive(Debug, Clone, Args, Serialize)]
struct LexiconArgs {
    /// Seed variable CSV (`name,variants`).
    #[arg(long)]
    variables: PathBuf,
    /// Seed relation CSV (`keyword,polarity`).
    #[arg(long)]
    relations: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BootstrapArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArgs,
    /// Label files (JSONL decisions), consulted in order.
    #[arg(long, num_args = 1.., conflicts_with = "interactive")]
    labels: Vec<PathBuf>,
    /// Adjudicate through the HTTP curation service.
    #[arg(long)]
    interactive: bool,
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CorefArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArgs,
    /// Word vector file (`token v1 .. vd`).
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Merge decisions JSONL to turn into a canonical map.
    #[arg(long)]
    decisions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ExtractArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArgs,
    /// Merge decisions JSONL applied before deduplication.
    #[arg(long)]
    merges: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GraphArgs {
    #[arg(long)]
    triples: PathBuf,
    /// Center entities; with `--hops` the output is their neighbourhood.
    #[arg(long)]
    center: Vec<String>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SelectArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    center: String,
    #[arg(long, default_value_t = 1)]
    hops: usize,
    /// Panel CSV whose columns are matched to the linked variables.
    #[arg(long, requires = "aliases")]
    panel: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ForecastArgs {
    /// Generate seeded synthetic panels and graph instead of reading files.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    alternative: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Comma-separated horizons in 1..=12.
    #[arg(long, value_delimiter = ',')]
    horizons: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ServeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArgs,
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Bearer token; also read from ECONKG_TOKEN.
    #[arg(long, env = "ECONKG_TOKEN", hide_env_values = true)]
    #[serde(skip)]
    token: Option<String>,
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct DemoArgs {
    #[arg(long, default_value = "demo-out")]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::FileConfig::load_or_default(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed);
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Bootstrap(a) => commands::bootstrap(&a, &cfg, seed),
        Command::Coref(a) => commands::coref(&a, &cfg),
        Command::Extract(a) => commands::extract(&a),
        Command::Graph(a) => commands::graph(&a),
        Command::Select(a) => commands::select(&a),
        Command::Forecast(a) => commands::forecast(&a, &cfg, seed),
        Command::Serve(a) => commands::serve(&a, &cfg, seed),
        Command::Demo(a) => commands::demo(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("econkg: {} error: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
