mod config;
mod data;
mod scan;
mod train;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use driftlab::learn::LearnError;
use driftlab::model::{HeadsOrder, ModelError};
use driftlab::syntax::BugKind;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICS: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "driftlab", version, about = "Learn to detect and repair single-token bugs in Python functions")]
#[command(args_override_self = true)]
#[command(after_help = "Flags can also come from a key=value file: driftlab --config FILE <COMMAND> ...\nCommand-line flags override the file.")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the bundled toy corpus.
    ToyCorpus(ToyArgs),
    /// Build syn-train, real-train, real-val and real-test from a corpus.
    Build(BuildArgs),
    /// Two-phase training.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Report likely bugs in a source tree.
    Scan(ScanArgs),
}

const SUBCOMMANDS: &[&str] = &["toy-corpus", "build", "train", "eval", "scan"];

#[derive(Args, Debug)]
struct SeedArg {
    #[arg(long, env = "DRIFTLAB_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value_t = 12)]
    syn_repos: usize,
    #[arg(long, default_value_t = 24)]
    real_repos: usize,
    #[arg(long, default_value_t = 40)]
    syn_functions: usize,
    #[arg(long, default_value_t = 72)]
    real_functions: usize,
    #[arg(long, default_value_t = 2)]
    bugs_per_repo: usize,
    /// Bug kinds with a fix history (comma separated; all by default).
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<BugKind>,
    #[arg(long, default_value_t = 0.5)]
    variant_rate: f64,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    kind: BugKind,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    /// Maximum number of program tokens per sample.
    #[arg(long, default_value_t = 512)]
    max_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PhaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory written by `build`.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch log (default: checkpoint path with `.log`).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PhaseArg::Both)]
    phase: PhaseArg,
    /// Checkpoint to continue from instead of a fresh model.
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Task-to-layer wiring: `flat` or three of cls,loc,rep.
    #[arg(long)]
    order: Option<HeadsOrder>,
    /// Subsample real-train to this non-buggy:buggy ratio.
    #[arg(long)]
    ratio: Option<f64>,
    /// Keep this percentage of syn-train pairs.
    #[arg(long)]
    percent_syn: Option<f64>,
    /// Keep this percentage of real-train samples.
    #[arg(long)]
    percent_real: Option<f64>,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 6)]
    layers: usize,
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    #[arg(long, default_value_t = 4)]
    epochs1: usize,
    #[arg(long, default_value_t = 4)]
    epochs2: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 2)]
    batch_size: usize,
    /// Use -ln(sum P*C) instead of -sum P*C for the pointer losses.
    #[arg(long)]
    log_pointer_loss: bool,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory written by `build`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "real-test")]
    split: driftlab::corpus::SplitName,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Precision-recall curve points for plotting.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of repositories (or a single repository).
    #[arg(long)]
    source: PathBuf,
    /// Must match the checkpoint's bug kind when given.
    #[arg(long)]
    kind: Option<BugKind>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Output file (JSON lines; stdout by default).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
}

/// Invalid flag values or combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        match cause.downcast_ref::<LearnError>() {
            Some(LearnError::Numerics(_)) => return EXIT_NUMERICS,
            Some(LearnError::Model(ModelError::Config(_))) => return EXIT_USAGE,
            _ => {}
        }
        if let Some(ModelError::Config(_)) = cause.downcast_ref::<ModelError>() {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::ToyCorpus(a) => data::toy_corpus(a),
        Command::Build(a) => data::build(a),
        Command::Train(a) => train::train(a),
        Command::Eval(a) => data::eval(a),
        Command::Scan(a) => scan::scan(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args().collect(), SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
