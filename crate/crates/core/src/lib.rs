//! Market-making reinforcement-learning workbench: level-2 book replay, a
//! matching simulator, technical indicators, a small deep Q-learning stack
//! and two trading environments (minute-scale buy/sell/hold and intra-minute
//! limit-order execution), plus benchmarks and a synthetic market generator.

pub mod agent;
pub mod bench;
pub mod config;
pub mod indicators;
pub mod ingest;
pub mod macro_env;
pub mod matchsim;
pub mod micro_env;
pub mod neural;
pub mod orderbook;
pub mod synth;
pub mod types;

use thiserror::Error;

pub use types::{Price, Side, Timestamp};

/// Any error raised by the library. Each variant wraps one module's error and
/// displays with that error's name first.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Book(#[from] orderbook::BookError),
    #[error(transparent)]
    Match(#[from] matchsim::MatchError),
    #[error(transparent)]
    Indicator(#[from] indicators::IndicatorError),
    #[error(transparent)]
    Net(#[from] neural::NetError),
    #[error(transparent)]
    Agent(#[from] agent::AgentError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Macro(#[from] macro_env::MacroError),
    #[error(transparent)]
    Micro(#[from] micro_env::MicroError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

impl Error {
    /// Module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Ingest(_) => "ingest",
            Error::Book(_) => "orderbook",
            Error::Match(_) => "matchsim",
            Error::Indicator(_) => "indicators",
            Error::Net(_) => "neural",
            Error::Agent(_) => "agent",
            Error::Config(_) => "config",
            Error::Macro(_) => "macro_env",
            Error::Micro(_) => "micro_env",
            Error::Bench(_) => "bench",
            Error::Synth(_) => "synth",
        }
    }
}
