//! `itnet`: synthesise data, train, explain, plan receptive fields and
//! compare accuracy tables.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 file system,
//! 4 malformed or inconsistent data, 5 numerical or statistical failure.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "itnet", version, about = "Motor-imagery EEG classifier toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic EEGEPOCH file.
    Synth(SynthArgs),
    /// Train and evaluate every subject in a data directory.
    Train(TrainArgs),
    /// Export kernel spectra, spatial patterns and an SVG sheet.
    Explain(ExplainArgs),
    /// Smallest temporal kernel reaching a target receptive field.
    Plan(PlanArgs),
    /// One-sided paired test between two accuracy tables.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// key=value file with `synth.*` keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// within, cross or cross-ft.
    #[arg(long)]
    scenario: String,
    /// Directory of subjectNN.train.eegepoch / subjectNN.test.eegepoch pairs.
    #[arg(long)]
    data: PathBuf,
    /// key=value file with `arch.*` and `train.*` keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Subjects trained concurrently.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    extra_epochs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sampling rate of the data the model was trained on.
    #[arg(long, default_value_t = 125.0)]
    fs: f64,
    #[arg(long)]
    out: PathBuf,
    /// Savitzky–Golay half-window.
    #[arg(long, default_value_t = 5)]
    savgol_l: usize,
    /// Savitzky–Golay polynomial order.
    #[arg(long, default_value_t = 3)]
    savgol_p: usize,
}

#[derive(Args)]
pub struct PlanArgs {
    #[arg(long)]
    target_r: u64,
    /// Layers per residual block.
    #[arg(long, default_value_t = 2)]
    m: u64,
    /// Dilation base.
    #[arg(long, default_value_t = 2)]
    b: u64,
    /// Residual blocks.
    #[arg(long, default_value_t = 4)]
    n: u32,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StatTest {
    Wilcoxon,
    Ttest,
}

#[derive(Args)]
pub struct StatsArgs {
    /// CSV whose column is tested as the larger sample.
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    vs: PathBuf,
    #[arg(long, value_enum, default_value_t = StatTest::Wilcoxon)]
    test: StatTest,
    #[arg(long, default_value = "accuracy")]
    column: String,
    /// Column of the second table; defaults to `--column`.
    #[arg(long)]
    vs_column: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Explain(a) => commands::explain(a),
        Command::Plan(a) => commands::plan(a),
        Command::Stats(a) => commands::stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.class.exit_code()
        }
    }
}
