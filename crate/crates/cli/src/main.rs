mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lnkt_core::Preset;

#[derive(Parser)]
#[command(name = "lnkt", version, about = "Train and evaluate lightweight CNN image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Full,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Full => Preset::Full,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on DIR/train (or DIR) with an 80/20 train/validation split.
    Train(TrainArgs),
    /// Print the classification report of a checkpoint on DIR/test.
    Eval(EvalArgs),
    /// Classify a single image.
    Predict(PredictArgs),
    /// Write a synthetic dataset with train/ and test/ trees.
    Synth(SynthArgs),
}

#[derive(clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint whose backbone initializes the model.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Train only the classification head.
    #[arg(long)]
    pub freeze_backbone: bool,
    #[arg(long, value_enum, default_value = "desk")]
    preset: PresetArg,
    #[arg(long, default_value_t = lnkt_core::preset::DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Initial learning rate [default: from the preset]
    #[arg(long)]
    pub lr: Option<f64>,
    /// SGD momentum [default: from the preset]
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long, default_value_t = lnkt_core::preset::DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the best checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the per-epoch report.
    #[arg(long)]
    pub report: PathBuf,
}

impl TrainArgs {
    pub fn preset(&self) -> Preset {
        self.preset.into()
    }
}

#[derive(clap::Args)]
pub struct EvalArgs {
    /// Dataset root; DIR/test is used when present, otherwise the
    /// validation part of the seeded split of DIR.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = lnkt_core::preset::DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
}

#[derive(clap::Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: usize,
    /// Training images per class.
    #[arg(long)]
    pub per_class: usize,
    /// Test images per class [default: a fifth of --per-class, at least 1]
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
