//! `flowtune` command-line entry point.

mod bench;
mod commands;
mod failure;
mod providers;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "flowtune", version, about = "Retrieval-guided EDA flow parameter tuning")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Parameter space TOML (defaults to the built-in 27-parameter space).
    #[arg(long, global = true)]
    pub space: Option<PathBuf>,
    /// Chat provider: `offline`, `mock:<script.json>` or `http`.
    #[arg(long, global = true, default_value = "offline")]
    pub chat: String,
    /// Model name for `--chat http`.
    #[arg(long, global = true, default_value = "")]
    pub chat_model: String,
    /// Embedding provider: `local[:dim]`, `mock:<vectors.json>` or `http`.
    #[arg(long, global = true, default_value = "local")]
    pub embed: String,
    /// Model name for `--embed http`.
    #[arg(long, global = true, default_value = "")]
    pub embed_model: String,
    /// Parallel summarization requests.
    #[arg(long, global = true, default_value_t = 1)]
    pub max_in_flight: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Scan an RTL tree and list its modules.
    Ingest(IngestArgs),
    /// Summarize a design and write the summaries.
    Summarize(SummarizeArgs),
    /// Design database operations.
    #[command(subcommand)]
    Db(DbCommand),
    /// Run a parameter search.
    Tune(Box<TuneArgs>),
    /// Evaluate one sample.
    Eval(EvalArgs),
    /// Compare runs and report parameter importance and metric tradeoffs.
    Analyze(AnalyzeArgs),
    /// Baselines versus retrieval-guided search on synthetic designs.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    /// RTL root directory.
    #[arg(long)]
    pub rtl: PathBuf,
    /// Design identifier (defaults to the directory name).
    #[arg(long)]
    pub design: Option<String>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Write the scanned modules as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Chunk size used to report the chunk count per module.
    #[arg(long, default_value_t = flowtune::rtl::DEFAULT_CHUNK_TOKENS)]
    pub chunk_tokens: usize,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = flowtune::rtl::DEFAULT_CHUNK_TOKENS)]
    pub chunk_tokens: usize,
}

#[derive(Subcommand, Debug)]
pub enum DbCommand {
    /// Build or extend a database from a design manifest.
    Build(DbBuildArgs),
    /// Add one design.
    Insert(DbInsertArgs),
    /// Retrieve the most similar stored designs for a design.
    Query(DbQueryArgs),
    /// Leave-one-out precision and recall on labeled records.
    EvalRetrieval(DbEvalArgs),
    /// Export embeddings as CSV.
    Export(DbExportArgs),
}

#[derive(Args, Debug)]
pub struct DbCommon {
    #[arg(long)]
    pub db: PathBuf,
    /// Guidance entries kept per design.
    #[arg(long, default_value_t = flowtune::db::DEFAULT_GUIDANCE_K)]
    pub k: usize,
    #[arg(long, default_value = "power")]
    pub metric: String,
}

#[derive(Args, Debug)]
pub struct DbBuildArgs {
    #[command(flatten)]
    pub common: DbCommon,
    /// TOML file with `[[design]]` entries (id, rtl, history, optional label).
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct DbInsertArgs {
    #[command(flatten)]
    pub common: DbCommon,
    #[command(flatten)]
    pub design: DesignArgs,
    /// Run directory or trials CSV of a finished search on this design.
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Args, Debug)]
pub struct DbQueryArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 1)]
    pub top: usize,
    #[arg(long)]
    pub cosine: bool,
}

#[derive(Args, Debug)]
pub struct DbEvalArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,10,20")]
    pub k: Vec<usize>,
    #[arg(long)]
    pub cosine: bool,
    /// Keep each query's own record among the candidates instead of leaving it out.
    #[arg(long)]
    pub include_self: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DbExportArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    /// `synthetic` or `command`.
    #[arg(long, default_value = "synthetic")]
    pub backend: String,
    /// Seed of the synthetic design.
    #[arg(long, default_value_t = 0)]
    pub synthetic_seed: u64,
    /// Pairwise interaction terms of the synthetic design.
    #[arg(long, default_value_t = 0)]
    pub synthetic_pairs: usize,
    /// Flow command template with `{config_path}`, `{report_path}`, `{work_dir}`.
    #[arg(long)]
    pub command: Option<String>,
    /// Working directory of the command backend.
    #[arg(long, default_value = "flow_work")]
    pub work_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Search configuration TOML; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Run directory (defaults to `runs/<engine>-<seed>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Design database (crop).
    #[arg(long, required_if_eq("engine", "crop"))]
    pub db: Option<PathBuf>,
    /// RTL root of the design being tuned (crop).
    #[arg(long, required_if_eq("engine", "crop"))]
    pub rtl: Option<PathBuf>,
    #[arg(long)]
    pub design: Option<String>,
    /// Do not reuse evaluations cached in the run directory.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// `name=value; ...` assignment covering every parameter.
    #[arg(long, conflicts_with = "indices")]
    pub sample: Option<String>,
    /// `i;j;k;...` option indices.
    #[arg(long)]
    pub indices: Option<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Run directories to compare.
    #[arg(long, value_delimiter = ',', required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,50,75")]
    pub checkpoints: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Importance report threshold on |rho|.
    #[arg(long, default_value_t = flowtune::analysis::DEFAULT_IMPORTANCE_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub designs: u64,
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
    /// Similarity of each target design to its stored neighbor.
    #[arg(long, default_value_t = 0.9)]
    pub alpha: f64,
    /// Trials of the random run that seeds the database.
    #[arg(long, default_value_t = 200)]
    pub history: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(f.exit_code())
        }
    }
}

pub(crate) type CliResult<T = ()> = Result<T, Failure>;
