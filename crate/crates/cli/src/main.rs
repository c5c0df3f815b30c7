mod commands;
mod config;
mod meta;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::config::FileConfig;

pub const DEFAULT_SEED: u64 = 20240615;

#[derive(Debug, Parser)]
#[command(name = "fgr", version, about = "Graded dense-retrieval evaluation and training-query synthesis")]
pub struct Cli {
    /// TOML file with defaults; flags override it
    #[arg(long, global = true, env = "FGR_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Seed for every randomized step
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Errors only
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed passages and queries into vector files
    Embed(EmbedArgs),
    /// Exact dense top-k search, written as a run file
    Search(SearchArgs),
    /// BM25 baseline run
    Bm25(Bm25Args),
    /// Graded nDCG report for one or more runs
    Eval(EvalArgs),
    /// Per-query win/loss/tie table of two runs
    Compare(CompareArgs),
    /// False-negative and false-positive worksheet for a run
    Analyze(AnalyzeArgs),
    /// Generate SM/KW training queries with an LLM
    Gen(GenArgs),
    /// Drop training passages too similar to test passages
    Filter(FilterArgs),
    /// Stratified random holdout of generated queries
    Split(SplitArgs),
    /// Write contrastive training pairs
    Export(ExportArgs),
    /// Dataset or generated-query statistics
    Stats(StatsArgs),
    /// Convert between dataset or vector file formats
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct DatasetArgs {
    /// Dataset directory (passages.tsv, queries.tsv, labels.tsv or
    /// dataset.jsonl) or a dataset JSON-lines file
    #[arg(long, conflicts_with_all = ["passages", "queries", "labels"])]
    pub dataset: Option<PathBuf>,
    /// Passage file (`id<TAB>text`)
    #[arg(long, requires_all = ["queries", "labels"])]
    pub passages: Option<PathBuf>,
    /// Query file (`id<TAB>text<TAB>type`)
    #[arg(long, requires_all = ["passages", "labels"])]
    pub queries: Option<PathBuf>,
    /// Label file (`query_id<TAB>passage_id<TAB>grade`)
    #[arg(long, requires_all = ["passages", "queries"])]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ProviderArgs {
    /// `file:<passage-vectors>,<query-vectors>` or an http(s) endpoint
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Instruction prepended to queries
    #[arg(long)]
    pub instruction: Option<String>,
    /// Instruction template: prefix, concat, instruct-query, or a literal
    /// containing {instruction} and {text}
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Concurrent remote batches
    #[arg(long)]
    pub fanout: Option<usize>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct TokenizerArgs {
    /// unigram, char, pretokenized, or dict:<word-list>
    #[arg(long)]
    pub tokenizer: Option<String>,
    /// Pre-tokenized passages (`id<TAB>space-separated tokens`)
    #[arg(long)]
    pub passage_tokens: Option<PathBuf>,
    /// Pre-tokenized queries (`id<TAB>space-separated tokens`)
    #[arg(long)]
    pub query_tokens: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Directory for passages.fgrvec and queries.fgrvec
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Write the text vector format instead of binary
    #[arg(long)]
    pub text: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(short, long, default_value_t = 100)]
    pub k: usize,
    /// Run name (default: model name)
    #[arg(long)]
    pub name: Option<String>,
    /// Run file (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Bm25Args {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// positive (ln(1 + ...)) or classic (negative idf floored at 0.25 x mean)
    #[arg(long)]
    pub idf: Option<String>,
    #[arg(short, long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value = "bm25")]
    pub name: String,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct MetricArgs {
    /// Comma-separated nDCG cutoffs
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    /// linear or exponential
    #[arg(long)]
    pub gain: Option<String>,
    /// Fail when a run lacks some query instead of scoring it as empty
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Run file(s) to score
    #[arg(long, required = true, num_args = 1..)]
    pub run: Vec<PathBuf>,
    #[command(flatten)]
    pub metrics: MetricArgs,
    /// Add a per-type table: fine8 or coarse5
    #[arg(long)]
    pub by_type: Option<String>,
    /// Cutoff for the per-type table (default: largest cutoff)
    #[arg(long)]
    pub type_cutoff: Option<usize>,
    /// Emit JSON lines instead of a table
    #[arg(long)]
    pub json: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub run_a: PathBuf,
    #[arg(long)]
    pub run_b: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub cutoff: usize,
    /// Absolute nDCG difference (0..1 scale) counted as a tie
    #[arg(long)]
    pub tie_band: Option<f64>,
    #[arg(long)]
    pub gain: Option<String>,
    #[arg(long)]
    pub strict: bool,
    /// Break the table down by coarse query type
    #[arg(long)]
    pub by_type: bool,
    #[arg(long)]
    pub json: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Literal-miss rule: containment or bm25
    #[arg(long, default_value = "containment")]
    pub literal: String,
    /// Containment: tokens that must match (default: all query tokens)
    #[arg(long)]
    pub min_tokens: Option<usize>,
    /// bm25 rule: depth at which BM25 must rank the passage
    #[arg(long, default_value_t = 10)]
    pub bm25_k: usize,
    /// Also list irrelevant passages ranked within k
    #[arg(long)]
    pub false_positives: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Passages to generate for (`id<TAB>text`)
    #[arg(long)]
    pub passages: PathBuf,
    /// Chat-completion endpoint
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated: sm, kw
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    #[arg(long)]
    pub temperature: Option<f32>,
    #[arg(long)]
    pub max_per_kind: Option<usize>,
    /// Builtin id (sm_v1) or a template file
    #[arg(long)]
    pub sm_template: Option<String>,
    #[arg(long)]
    pub kw_template: Option<String>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub parse_retries: Option<u32>,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Append every LLM request and reply to this JSON-lines file
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Training passages (`id<TAB>text`)
    #[arg(long)]
    pub train: PathBuf,
    /// Test passages: a passage file, dataset directory or dataset JSON-lines
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// f1 or recall
    #[arg(long, default_value = "f1")]
    pub measure: String,
    /// char or unigram
    #[arg(long, default_value = "char")]
    pub unit: String,
    /// Kept passages
    #[arg(short, long)]
    pub out: PathBuf,
    /// Dropped passages with the matching test id and score (JSON lines)
    #[arg(long)]
    pub dropped: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Generated queries (JSON lines)
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub fraction: f64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub holdout_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Generated queries (JSON lines)
    #[arg(long)]
    pub queries: PathBuf,
    /// Source passages (`id<TAB>text`)
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Generated queries (JSON lines); requires --passages-file
    #[arg(long, requires = "passages_file")]
    pub generated: Option<PathBuf>,
    /// Passage pool the queries were generated from
    #[arg(long)]
    pub passages_file: Option<PathBuf>,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[command(subcommand)]
    pub what: ConvertWhat,
}

#[derive(Debug, Subcommand)]
pub enum ConvertWhat {
    /// Three TSV files <-> one JSON-lines file
    Dataset {
        #[command(flatten)]
        dataset: DatasetArgs,
        /// tsv (writes a directory) or jsonl (writes a file)
        #[arg(long)]
        to: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Binary <-> text vector files
    Vectors {
        #[arg(long = "in")]
        input: PathBuf,
        /// binary or text
        #[arg(long)]
        to: String,
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// Flag combinations rejected after parsing; exits like a clap error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        "error"
    } else {
        match cli.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        }
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    let result = cli
        .config
        .as_deref()
        .map(FileConfig::load)
        .transpose()
        .and_then(|cfg| {
            let cfg = cfg.unwrap_or_default();
            if let Some(jobs) = cli.jobs.or(cfg.jobs) {
                if jobs == 0 {
                    return Err(usage("--jobs must be at least 1"));
                }
                rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
            }
            let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
            commands::dispatch(&cli.command, &cfg, seed)
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
