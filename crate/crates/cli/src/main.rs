//! `nbeats`: corpus conversion, training, zero-shot evaluation, block
//! sweeps, diagnostics and report tables.

mod commands;
mod config;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nbeats::data::{Frequency, SourceLayout};
use nbeats::metrics::MetricKind;
use nbeats::training::{Precision, Profile};

#[derive(Parser, Debug)]
#[command(name = "nbeats", version, about = "N-BEATS training and zero-shot evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert benchmark files (or generate a synthetic family) into a corpus.
    Convert(ConvertArgs),
    /// Train one ensemble per source split and write a checkpoint set.
    Train(TrainArgs),
    /// Score a checkpoint set on a target corpus without touching its weights.
    Zeroshot(ZeroshotArgs),
    /// Train and score ensembles over block counts and weight sharing.
    Sweep(SweepArgs),
    /// Shift, linearization and linear-collapse diagnostics of a checkpoint.
    Diagnose(DiagnoseArgs),
    /// Collect evaluation, sweep and diagnostics outputs into CSV tables.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    M4,
    M3,
    Tourism,
    Generic,
}

impl From<Layout> for SourceLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::M4 => SourceLayout::M4,
            Layout::M3 => SourceLayout::M3,
            Layout::Tourism => SourceLayout::Tourism,
            Layout::Generic => SourceLayout::Generic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Source,
    Target,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long, value_enum, required_unless_present = "synthetic")]
    layout: Option<Layout>,
    /// Input files; M4 and tourism take the train/in file then the test/oos file.
    #[arg(long = "input", num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Generate a synthetic family instead of reading files.
    #[arg(long, value_enum, conflicts_with = "layout")]
    synthetic: Option<Family>,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_frequency)]
    frequency: Option<Frequency>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

/// Options shared by the commands that train.
#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_profile)]
    profile: Option<Profile>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_precision)]
    precision: Option<Precision>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    share_weights: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Lookback multiples of the ensemble, comma separated.
    #[arg(long, value_delimiter = ',')]
    lookbacks: Option<Vec<usize>>,
    /// Training losses of the ensemble, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    losses: Option<Vec<MetricKind>>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Worker threads; defaults to NBEATS_WORKERS or the CPU count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct ZeroshotArgs {
    /// Checkpoint set directory or its manifest.
    #[arg(long)]
    checkpoints: PathBuf,
    /// Target corpus manifest.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_metric, default_value = "smape")]
    metric: MetricKind,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Target split to sweep on.
    #[arg(long, value_parser = parse_frequency)]
    frequency: Option<Frequency>,
    /// Block counts, comma separated.
    #[arg(long = "block-counts", value_delimiter = ',')]
    block_counts: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    sharing: Option<Sharing>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<MetricKind>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sharing {
    Shared,
    Unique,
    Both,
}

impl Sharing {
    fn values(self) -> Vec<bool> {
        match self {
            Sharing::Shared => vec![true],
            Sharing::Unique => vec![false],
            Sharing::Both => vec![true, false],
        }
    }
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// A `.nbck` checkpoint, or a checkpoint set directory or manifest.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Member index when `--checkpoint` names a set.
    #[arg(long, default_value_t = 0)]
    member: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    max_blocks: usize,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory searched recursively for command outputs.
    #[arg(long)]
    artifacts: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_frequency(s: &str) -> Result<Frequency, String> {
    s.parse().map_err(|e: nbeats::Error| e.to_string())
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: nbeats::Error| e.to_string())
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: nbeats::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    MetricKind::parse(s).ok_or_else(|| format!("unknown metric `{s}`"))
}

fn main() -> std::process::ExitCode {
    let result = match Cli::parse().command {
        Command::Convert(a) => commands::convert(a),
        Command::Train(a) => commands::train(a),
        Command::Zeroshot(a) => commands::zeroshot(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
