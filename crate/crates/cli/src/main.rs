//! `greedypose` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (",
    env!("GREEDYPOSE_BUILD_TARGET"),
    ", ",
    env!("GREEDYPOSE_BUILD_PROFILE"),
    ")"
);

#[derive(Parser)]
#[command(name = "greedypose", version = VERSION, about = "Greedy part assignment for multi-person pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble detections into person clusters.
    Assign(AssignArgs),
    /// Generate a synthetic scene: detections and ground truth.
    Synth(SynthArgs),
    /// Score predicted poses against ground truth with PCKh.
    Eval(EvalArgs),
    /// Solve a small instance exhaustively and compare with the greedy pass.
    Oracle(OracleArgs),
    /// Measure runtime against candidates per class.
    Bench(BenchArgs),
    /// Run the cumulative ablation ladder on a synthetic validation set.
    Ablation(AblationArgs),
}

#[derive(Args)]
pub struct AssignArgs {
    /// Detections file, or a directory of `*.json` detection files.
    #[arg(long, short)]
    pub input: PathBuf,
    /// JSON config: assignment settings and optional table overrides.
    #[arg(long, env = "GREEDYPOSE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the config and the detections file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write per-stage diagnostics to a `.trace.json` sidecar.
    #[arg(long)]
    pub trace: bool,
    /// Output file; a directory when the input is one. Defaults to stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub people: usize,
    /// JSON noise settings; missing keys take defaults.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_detections: PathBuf,
    #[arg(long)]
    pub out_gt: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long, short)]
    pub input: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 400, 800, 1600, 3200])]
    pub grid: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub people: usize,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the full report, including the slope, as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblationArgs {
    #[arg(long, default_value_t = 200)]
    pub scenes: usize,
    #[arg(long, default_value_t = 2)]
    pub min_people: usize,
    #[arg(long, default_value_t = 8)]
    pub max_people: usize,
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long, env = "GREEDYPOSE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Assign(a) => commands::assign(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Ablation(a) => commands::ablation(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
