//! Command-line front end: dataset generation, training, pruning sweeps,
//! random-structure experiments and their analysis.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_CONTRACT: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Contract(_) => EXIT_CONTRACT,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Contract(m) => write!(f, "contract violation: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sparse_rnn::Error> for CliError {
    fn from(e: sparse_rnn::Error) -> Self {
        use sparse_rnn::Error as E;
        match e {
            E::Io(_) | E::Json(_) | E::Csv(_) | E::Parse(_) => CliError::Io(e.to_string()),
            E::Shape { .. } | E::Domain(_) | E::Input(_) | E::Contract(_) => CliError::Contract(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sparse-rnn",
    version,
    about = "Sparse recurrent network experiments on the Reber grammar"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled Reber dataset (75/25 train/test split).
    GenData(GenDataArgs),
    /// Train a stacked recurrent classifier.
    Train(TrainArgs),
    /// Magnitude-prune a trained checkpoint at several sparsities and retrain.
    Prune(PruneArgs),
    /// Train models whose wiring follows random graphs and record graph
    /// properties next to accuracy.
    Randstruct(RandstructArgs),
    /// Correlations, regressions and plot data over randstruct records.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Random seed (falls back to SPARSE_RNN_SEED, then 0).
    #[arg(long)]
    pub seed: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Total number of sequences (even).
    #[arg(long)]
    pub total: Option<String>,
    /// Minimum sequence length.
    #[arg(long)]
    pub min_len: Option<String>,
    /// Output prefix; writes <out>.train.csv, <out>.test.csv, <out>.meta.json.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset prefix written by gen-data.
    #[arg(long)]
    pub data: Option<String>,
    /// rnn_tanh, rnn_relu, lstm or gru.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub layers: Option<String>,
    /// Units per recurrent layer.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub d_emb: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<String>,
    /// History CSV path (default <out>.history.csv).
    #[arg(long)]
    pub history: Option<String>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<String>,
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Expected variant of the checkpoint.
    #[arg(long)]
    pub variant: Option<String>,
    /// i2h, h2h or both.
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated percents (default 10,20,...,100).
    #[arg(long)]
    pub percents: Option<String>,
    /// A single percent instead of the list.
    #[arg(long)]
    pub percent: Option<String>,
    #[arg(long)]
    pub max_regain_epochs: Option<String>,
    /// Regain bar is the pre-prune accuracy minus this.
    #[arg(long)]
    pub tolerance: Option<String>,
    /// Use a separate threshold per layer.
    #[arg(long)]
    pub per_layer: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub jobs: Option<String>,
    /// Sweep CSV path.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct RandstructArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Runs per graph family.
    #[arg(long)]
    pub per_family: Option<String>,
    #[arg(long)]
    pub ws_k: Option<String>,
    #[arg(long)]
    pub ws_p: Option<String>,
    #[arg(long)]
    pub ba_m: Option<String>,
    /// Smallest node count (inclusive).
    #[arg(long)]
    pub nodes_min: Option<String>,
    /// Largest node count (inclusive).
    #[arg(long)]
    pub nodes_max: Option<String>,
    #[arg(long)]
    pub d_emb: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub jobs: Option<String>,
    /// Runs per appended chunk (default: jobs).
    #[arg(long)]
    pub chunk: Option<String>,
    /// JSONL records path; an existing file is resumed.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// JSONL records from randstruct.
    #[arg(long)]
    pub records: Option<String>,
    #[arg(long)]
    pub trees: Option<String>,
    #[arg(long)]
    pub max_depth: Option<String>,
    #[arg(long)]
    pub min_leaf: Option<String>,
    #[arg(long)]
    pub jobs: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
}

/// Parses arguments and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("sparse-rnn: {e}");
            e.exit_code()
        }
    }
}
