//! `ber`: train, evaluate and inspect back-stepping experience replay agents.

mod commands;
mod config;
mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input from the user; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ber_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "ber", version, about = "Back-stepping experience replay for goal-conditioned agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent from a run configuration.
    Train(TrainArgs),
    /// Run greedy episodes with a trained checkpoint.
    Eval(EvalArgs),
    /// Drive the snake simulator with a fixed pressure program.
    Simulate(SimulateArgs),
    /// Measure how well reversed actions retrace sampled transitions.
    ValidateReversibility(ValidateArgs),
    /// Plot learning curves or centre of mass paths from CSV outputs.
    Plot(PlotArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `trainer.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; must be absent or empty.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `trainer.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Task file: `start goal` bit strings, or `x y` snake targets, one per line.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Seed of task sampling; defaults to the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Run configuration whose `[env]` table sets the snake parameters; defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `const:b1,b2,c` or a file with one `b1,b2,c` line per period; the last entry repeats.
    #[arg(long)]
    pub program: String,
    /// Simulated time in seconds, rounded to whole periods.
    #[arg(long)]
    pub duration: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG of the centre of mass path.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Maximum number of random actions applied before each sampled transition.
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PlotArgs {
    /// `metrics.csv` or `trajectory.csv` files.
    #[arg(required = true)]
    pub input: Vec<PathBuf>,
    /// SVG file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics column to plot.
    #[arg(long, default_value = "success")]
    pub column: String,
    /// Moving average window for metrics.
    #[arg(long, default_value_t = 50)]
    pub window: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::ValidateReversibility(a) => commands::validate_reversibility(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
