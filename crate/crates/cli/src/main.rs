//! `toolde`: expand tool documentation, retrieve, rerank and evaluate.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 a model backend failed.

mod backends;
mod commands;
mod config;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] toolde_core::Error),

    #[error(transparent)]
    Review(#[from] toolde_review::ReviewError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_backend() => 2,
            _ => 1,
        }
    }
}

fn existing(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.exists() {
        Ok(p)
    } else {
        Err(format!("no such file `{s}`"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "toolde",
    version,
    about = "Tool documentation expansion, retrieval and evaluation"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "TOOLDE_CONFIG", value_parser = existing)]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map raw field names onto the canonical fields.
    Canonicalize(CanonicalizeArgs),
    /// Per-dataset fraction of documents carrying each canonical field.
    Coverage(CoverageArgs),
    /// Ask the judge backend whether sampled documents are complete.
    Audit(AuditArgs),
    /// Run the expansion pipeline over a raw corpus.
    Expand(ExpandArgs),
    /// Average token lengths of original and generated text.
    Stats(StatsArgs),
    /// Build a sparse or dense index.
    Index(IndexArgs),
    /// Search an index with every query and write a TREC run.
    Search(SearchArgs),
    /// Rerank the top candidates of a run.
    Rerank(RerankArgs),
    /// Score a run against relevance judgments.
    Eval(EvalArgs),
    /// Add-one or one-out field ablation.
    Ablate(AblateArgs),
    /// Query similarity to positives and negatives, expanded vs original.
    Simanalysis(SimArgs),
    /// Build embedding or reranker training data.
    BuildTrain(TrainArgs),
    /// Serve review batches for human validation.
    ReviewServe(ReviewServeArgs),
    /// Export recorded judgments for a batch.
    ReviewExport(ReviewExportArgs),
}

#[derive(Debug, Args)]
pub struct CanonicalizeArgs {
    /// Raw corpus (JSONL).
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `canonical` keeps per-field sources; `corpus` writes plain corpus lines.
    #[arg(long, value_enum, default_value_t = CanonicalFormat::Canonical)]
    pub format: CanonicalFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CanonicalFormat {
    Canonical,
    Corpus,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the matrix as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    /// Documents sampled per domain.
    #[arg(long, default_value_t = 100)]
    pub per_domain: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fields rendered for the judge: `original`, `default`, `full`, or a list.
    #[arg(long, default_value = "original")]
    pub fields: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Raw corpus (JSONL).
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    /// Output corpus; failed documents are written unexpanded.
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Review batch sampled from refined documents (JSON).
    #[arg(long)]
    pub review_batch: Option<PathBuf>,
    /// Per-document outcomes; an existing file resumes the run.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stage latency statistics (JSON). Kept apart from the report so the
    /// report is reproducible.
    #[arg(long)]
    pub latency: Option<PathBuf>,
    /// Seed for review sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accept profiles with more than five tags.
    #[arg(long)]
    pub lenient_tags: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus with generated profiles.
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "whitespace")]
    pub tokenizer: String,
    /// Profile fields counted.
    #[arg(long, default_value = "default")]
    pub fields: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum IndexMode {
    Sparse,
    Dense,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = IndexMode::Sparse)]
    pub mode: IndexMode,
    /// Profile fields indexed with the original text.
    #[arg(long, default_value = "default")]
    pub fields: String,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_parser = existing)]
    pub index: PathBuf,
    #[arg(long, value_parser = existing)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// `concat` or `query_only`; defaults to query_only for sparse and
    /// concat for dense indexes.
    #[arg(long)]
    pub instruction_mode: Option<String>,
    #[arg(long, default_value = "toolde")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long, value_parser = existing)]
    pub run: PathBuf,
    #[arg(long, value_parser = existing)]
    pub queries: PathBuf,
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub pool: Option<usize>,
    /// `expanded` or `original` document text.
    #[arg(long, default_value = "expanded")]
    pub view: String,
    #[arg(long, default_value = "default")]
    pub fields: String,
    #[arg(long, default_value = "query_only")]
    pub instruction_mode: String,
    #[arg(long, default_value = "rerank")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_parser = existing)]
    pub run: PathBuf,
    #[arg(long, value_parser = existing)]
    pub qrels: PathBuf,
    #[arg(long, value_parser = existing)]
    pub queries: PathBuf,
    /// Cutoffs, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, default_value = "domain_macro")]
    pub averaging: String,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = existing)]
    pub queries: PathBuf,
    #[arg(long, value_parser = existing)]
    pub qrels: PathBuf,
    /// `add_one` or `one_out`.
    #[arg(long)]
    pub protocol: String,
    #[arg(long, value_enum, default_value_t = IndexMode::Sparse)]
    pub mode: IndexMode,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// First-stage depth per variant (default 100).
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = existing)]
    pub queries: PathBuf,
    #[arg(long, value_parser = existing)]
    pub qrels: PathBuf,
    /// Queries sampled per domain.
    #[arg(long, default_value_t = 50)]
    pub per_domain: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Profile fields of the expanded view.
    #[arg(long, default_value = "default")]
    pub fields: String,
    #[arg(long, default_value = "concat")]
    pub instruction_mode: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainTask {
    Embed,
    Rerank,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: TrainTask,
    #[arg(long, value_parser = existing)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = existing)]
    pub queries: PathBuf,
    #[arg(long, value_parser = existing)]
    pub qrels: PathBuf,
    /// Negatives per positive (default 5 for embed, 3 for rerank).
    #[arg(long)]
    pub n_neg: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "expanded")]
    pub view: String,
    /// `pairs` or `messages`.
    #[arg(long, default_value = "pairs")]
    pub format: String,
    #[arg(long, default_value = "concat")]
    pub instruction_mode: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReviewServeArgs {
    /// Review batch files (JSON); repeat for several.
    #[arg(long = "batch", required = true, value_parser = existing)]
    pub batches: Vec<PathBuf>,
    /// Append-only judgment journal; created if missing.
    #[arg(long)]
    pub journal: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Built review UI served at `/`.
    #[arg(long, value_parser = existing)]
    pub static_dir: Option<PathBuf>,
    /// Shared bearer token for the API.
    #[arg(long, env = "TOOLDE_REVIEW_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// Browser origin allowed by CORS (any when omitted).
    #[arg(long)]
    pub cors_origin: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReviewExportArgs {
    #[arg(long, value_parser = existing)]
    pub batch: PathBuf,
    #[arg(long, value_parser = existing)]
    pub journal: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline report to update with the human-validation summary.
    #[arg(long, value_parser = existing)]
    pub report: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
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
    init_logging(cli.verbose);
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
