//! `market-clock`: analyze a market spec, estimate expected market times to
//! reach a wealth level, and tabulate asymptotic ratio studies.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 non-viable market, 4 bound-check failure.

mod commands;
mod output;
mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    NotViable(String),
    #[error("{0}")]
    BoundCheck(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::NotViable(_) => 3,
            CliError::BoundCheck(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "market-clock", version, about = "Growth-optimal portfolios and market-time upcrossings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the numéraire portfolio and print it as JSON.
    Analyze {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Monte Carlo estimate of the expected market time to reach a level.
    Simulate(SimulateArgs),
    /// Ratio of expected market time to log-level across increasing levels.
    Study(StudyArgs),
    /// Numéraire against constant-proportion strategies.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Event,
    Grid,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Initial wealth.
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    #[arg(long, default_value_t = 10_000)]
    pub reps: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Event)]
    pub scheme: SchemeArg,
    /// Calendar step of the grid scheme (Itô markets always use the grid).
    #[arg(long, default_value_t = market_clock::simulator::DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 picks the number of CPUs.
    #[arg(long, env = "MARKET_CLOCK_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long = "k-sigma", default_value_t = market_clock::analytics::DEFAULT_K_SIGMA)]
    pub k_sigma: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub level: f64,
    /// Constant proportions (comma separated) instead of the numéraire.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub pi: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated increasing levels.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub levels: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub level: f64,
    /// A constant strategy (comma separated); repeat for several.
    #[arg(long, allow_hyphen_values = true)]
    pub pi: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Analyze { spec } => commands::analyze(&spec),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Study(args) => commands::study(&args),
        Command::Compare(args) => commands::compare(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("market-clock: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
