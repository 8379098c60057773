use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dacat::{Branches, FusionMode, Interaction, ModelConfig, Readout};

mod commands;
mod dataset;

#[derive(Parser)]
#[command(name = "dacat", version, about = "Online phase recognition with an adaptive clip-aware cache")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Train the cache encoder (stage 1) and the dual-stream model (stage 2).
    Train(TrainArgs),
    /// Predict per-frame phases for every video of a dataset.
    Infer(InferArgs),
    /// Score predictions against annotations, strict and relaxed.
    Eval(EvalArgs),
    /// Retrain stage 2 for each read-out strategy and tabulate per-phase Jaccard.
    Ablate(AblateArgs),
    /// Time the online step at several cache lengths.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub videos: usize,
    #[arg(long, default_value_t = 500)]
    pub len: usize,
    #[arg(long, default_value_t = 7)]
    pub phases: usize,
    #[arg(long, default_value_t = 16)]
    pub d_raw: usize,
    #[arg(long, default_value_t = 0.0)]
    pub interference: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Relative dwell jitter in [0, 1).
    #[arg(long, default_value_t = 0.3)]
    pub jitter: f64,
    /// Probability of skipping each inner phase.
    #[arg(long, default_value_t = 0.0)]
    pub skip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = FusionMode::After)]
    pub fusion: FusionMode,
    #[arg(long, default_value_t = Interaction::Ca)]
    pub interaction: Interaction,
    /// adaptive, all or fixed:k
    #[arg(long, default_value_t = Readout::Adaptive)]
    pub readout: Readout,
    #[arg(long, default_value_t = Branches::Both)]
    pub branches: Branches,
    /// Keep at most this many frames in the feature cache.
    #[arg(long)]
    pub capacity: Option<usize>,
}

impl ModelArgs {
    pub fn config(&self, d_raw: usize, num_phases: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            fusion: self.fusion,
            interaction: self.interaction,
            readout: self.readout,
            branches: self.branches,
            capacity: self.capacity,
            seed,
            ..ModelConfig::new(self.d, d_raw, num_phases, self.hidden)
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs1: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs2: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr1: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub lr2: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 256)]
    pub segment1: usize,
    #[arg(long, default_value_t = 64)]
    pub segment2: usize,
    /// Decay both learning rates linearly to zero.
    #[arg(long)]
    pub linear_decay: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of phases; read from the dataset manifest when omitted.
    #[arg(long)]
    pub phases: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, value_enum, default_value_t = Stage::Both)]
    pub stage: Stage,
    /// Stage-1 checkpoint for `--stage 2` (default: OUT/cache_encoder.dcpt).
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Hold out the last N videos and keep the stage-2 epoch that scores best on them.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub phases: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory of predicted timelines written by `infer`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Relaxation window in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    /// Frame rate of the annotations.
    #[arg(long, default_value_t = 1.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub phases: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    /// Stage-1 checkpoint file or training directory; stage 1 is trained when omitted.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Number of trailing videos used for testing (default: a third).
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub phases: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Cache lengths to time, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 768)]
    pub d: usize,
    /// Raw observation dimension (default: same as --d).
    #[arg(long)]
    pub d_raw: Option<usize>,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 7)]
    pub phases: usize,
    #[arg(long, default_value_t = FusionMode::After)]
    pub fusion: FusionMode,
    #[arg(long, default_value_t = Interaction::Ca)]
    pub interaction: Interaction,
    #[arg(long, default_value_t = Readout::Adaptive)]
    pub readout: Readout,
    /// Timed steps per length.
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV file; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
