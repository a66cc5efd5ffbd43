mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use trafficnet::autodiff::suite::LayerOp;
use trafficnet::ensemble::CombineMethod;

use crate::config::Preset;

/// Traffic map forecasting: synthetic data, training, prediction and ensembling.
#[derive(Debug, Parser)]
#[command(name = "trafficnet", version)]
struct Cli {
    /// Worker threads for kernels and ensemble forwards (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Train one model and write checkpoints plus a loss log.
    Train(TrainArgs),
    /// Run one checkpoint over a dataset split.
    Predict(PredictArgs),
    /// Combine several checkpoints and optionally score them.
    Ensemble(EnsembleArgs),
    /// Score a directory of predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of every layer's backward pass.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    model_type: Option<u8>,
    #[arg(long)]
    lr: Option<f64>,
    /// Feed only the 108 dynamic channels.
    #[arg(long)]
    no_static: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Architecture preset; overrides a `preset` key in the config file.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Mean,
    Median,
}

impl From<MethodArg> for CombineMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mean => CombineMethod::Mean,
            MethodArg::Median => CombineMethod::Median,
        }
    }
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// Comma-separated checkpoint paths.
    #[arg(long, value_delimiter = ',', required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "mean")]
    method: MethodArg,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Directory holding `<i>_target.t4ct` ground truth.
    #[arg(long)]
    truth_dir: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory holding `<i>_pred.t4ct` files.
    #[arg(long)]
    pred_dir: PathBuf,
    /// Directory holding `<i>_target.t4ct` files.
    #[arg(long)]
    truth_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    ConvBackward,
}

fn op_names() -> PossibleValuesParser {
    PossibleValuesParser::new(std::iter::once("all").chain(LayerOp::ALL.iter().map(|op| op.name())))
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Layer op name, or `all`.
    #[arg(long, default_value = "all", value_parser = op_names())]
    op: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Ensemble(a) => commands::ensemble(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
