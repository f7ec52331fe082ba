use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

#[derive(Debug, Parser)]
#[command(name = "mmrl", version, about = "Market-making reinforcement-learning workbench")]
struct Cli {
    /// Flat `key = value` config file; command-line flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an event stream and snapshot; write a timeline and minute bars.
    Ingest(IngestArgs),
    /// Generate a synthetic snapshot and event stream.
    Synth(SynthArgs),
    /// Train the minute-scale buy/sell/hold agent.
    TrainMacro(TrainMacroArgs),
    /// Train the limit-order execution agent.
    TrainMicro(TrainMicroArgs),
    /// Evaluate a strategy on the test split.
    Backtest(BacktestArgs),
    /// Compare the backtests found under a directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    /// Skip malformed records instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    minutes: Option<usize>,
    /// Mid-price drift per minute.
    #[arg(long, allow_hyphen_values = true)]
    trend: Option<f64>,
    /// Standard deviation of the per-second mid step.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    base_price: Option<f64>,
    #[arg(long)]
    trade_rate: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainMacroArgs {
    #[arg(long)]
    ticks: PathBuf,
    /// Split timestamp (ms); bars before it are used for training.
    #[arg(long)]
    split: i64,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainMicroArgs {
    /// Directory holding `snapshot.json` and `events.jsonl`.
    #[arg(long)]
    timeline: PathBuf,
    #[arg(long)]
    split: i64,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Buyhold,
    Momentum,
    Macro,
    Pipeline,
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::Buyhold => "buyhold",
            Strategy::Momentum => "momentum",
            Strategy::Macro => "macro",
            Strategy::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[arg(long, value_enum)]
    strategy: Strategy,
    /// Minute bars CSV; derived from the timeline when omitted.
    #[arg(long)]
    ticks: Option<PathBuf>,
    /// Directory holding `snapshot.json` and `events.jsonl`.
    #[arg(long)]
    timeline: Option<PathBuf>,
    /// Start of the test split (ms).
    #[arg(long)]
    split: i64,
    /// Macro checkpoint; trained on the training split when omitted.
    #[arg(long)]
    macro_ckpt: Option<PathBuf>,
    /// Micro checkpoint; trained on the training split when omitted.
    #[arg(long)]
    micro_ckpt: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    runs: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match err.downcast_ref::<mmrl_core::Error>() {
                Some(e) => eprintln!("error: {}: {e}", e.module()),
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::from(1)
        }
    }
}
