//! `tracefault` command-line front end.
//!
//! Exit codes: 0 success, 1 operational error, 2 usage or schema error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "tracefault", version, about = "Diagnose and localize faults in DL training programs")]
struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trace processing.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Where to write the command's main artifact (stdout when absent).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn trace files into a 160-feature CSV.
    Extract(ExtractArgs),
    /// Train the diagnosers on a labeled feature CSV and report held-out metrics.
    Train(TrainArgs),
    /// Diagnose fault types from traces, optionally localizing them in a program.
    Diagnose(DiagnoseArgs),
    /// Localize fault types in a training script.
    Localize(LocalizeArgs),
    /// Seed faults into a model spec.
    Seed(SeedArgs),
    /// Decide whether a mutant is killed given two accuracy sample files.
    KillCheck(KillCheckArgs),
    /// Per-feature statistics split by presence of one fault label.
    ExportDist(ExportDistArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Trace files (JSONL).
    pub traces: Vec<PathBuf>,
    /// JSON object mapping run ids to fault label lists; adds label columns.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSV with `label_*` columns.
    pub features: PathBuf,
    /// Also write the held-out metrics JSON here.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Trained diagnoser bundle.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Training script to localize the diagnosed faults in.
    #[arg(long)]
    pub program: Option<PathBuf>,
    /// Trace files, one per training run of the program.
    pub traces: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Training script.
    pub program: PathBuf,
    /// Fault types to localize, comma separated.
    #[arg(long, default_value = "loss,optimizer,lr,epoch,act")]
    pub faults: String,
    /// Write the model spec derived from the script here.
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Model spec JSON to mutate.
    #[arg(long)]
    pub spec: PathBuf,
    /// Upper bound on distinct fault types to seed (1..=5).
    #[arg(long)]
    pub max_types: Option<usize>,
    /// Program that trains a spec and prints its accuracies; enables the kill check.
    #[arg(long)]
    pub evaluator: Option<PathBuf>,
    /// Extra argument for the evaluator (repeatable).
    #[arg(long = "evaluator-arg", allow_hyphen_values = true)]
    pub evaluator_args: Vec<String>,
    /// Trainings per spec when an evaluator is used.
    #[arg(long)]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct KillCheckArgs {
    /// Accuracies of the original program (JSON array).
    pub original: PathBuf,
    /// Accuracies of the mutant (JSON array).
    pub mutant: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExportDistArgs {
    /// Labeled feature CSV.
    pub features: PathBuf,
    /// Fault label that splits the rows.
    #[arg(long)]
    pub label: String,
}

/// Global options after merging the config file with flags.
pub struct Context {
    pub config: PipelineConfig,
    pub jobs: Option<usize>,
    pub output: Option<PathBuf>,
}

fn build_context(cli: &Cli) -> Result<Context, commands::Failure> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(commands::Failure::usage)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(commands::Failure::usage_msg)?;
    if cli.jobs == Some(0) {
        return Err(commands::Failure::usage_msg("--jobs must be >= 1"));
    }
    Ok(Context {
        config,
        jobs: cli.jobs,
        output: cli.output.clone(),
    })
}

fn run(cli: Cli) -> Result<(), commands::Failure> {
    let ctx = build_context(&cli)?;
    match cli.command {
        Command::Extract(a) => commands::extract(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Diagnose(a) => commands::diagnose(&ctx, a),
        Command::Localize(a) => commands::localize(&ctx, a),
        Command::Seed(a) => commands::seed(&ctx, a),
        Command::KillCheck(a) => commands::kill_check(&ctx, a),
        Command::ExportDist(a) => commands::export_dist(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
