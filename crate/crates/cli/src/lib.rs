//! Command-line driver: preprocess, verify, train, evaluate, compare and predict.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use memotion_core::dataset::Split;
use memotion_core::experiments::{EncoderSet, ModelVariant};
use memotion_core::encoders::WeightSource;

pub use manifest::{run_timestamp, RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "memotion", version, about = "Multimodal meme sentiment and emotion classification")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every stochastic component [default: the config file's seed, else 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Use the deterministic toy encoders instead of pretrained weights.
    #[arg(long, global = true)]
    pub toy_encoders: bool,
    /// Instantiate the full encoder architectures with procedural (untrained) weights.
    #[arg(long, global = true, hide = true, conflicts_with = "toy_encoders")]
    pub procedural_weights: bool,
    /// TOML file with training-config overrides (and optionally a `preset`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Defaults to `runs/<command>`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Decision threshold for the binary subtasks.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub threshold: f64,
}

impl GlobalArgs {
    pub fn encoder_set(&self) -> EncoderSet {
        if self.toy_encoders {
            EncoderSet::Toy
        } else if self.procedural_weights {
            EncoderSet::Pretrained {
                text: WeightSource::Procedural,
                dense: WeightSource::Procedural,
                residual: WeightSource::Procedural,
            }
        } else {
            EncoderSet::registry()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw CSV split, repair captions and write it to a record store.
    Preprocess(PreprocessArgs),
    /// Check per-class counts of a labeled store against the published split tables.
    Verify(VerifyArgs),
    /// Train one model per subtask with a named preset.
    Train(TrainArgs),
    /// Score saved checkpoints on a split of the store.
    Evaluate(EvaluateArgs),
    /// Train and evaluate the five model variants and render the comparison table.
    Compare(CompareArgs),
    /// Classify a single meme with a directory of per-subtask checkpoints.
    Predict(PredictArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preprocess(_) => "preprocess",
            Command::Verify(_) => "verify",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Compare(_) => "compare",
            Command::Predict(_) => "predict",
        }
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// TOML column/label mapping for non-standard headers.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Do not decode images (records with missing files are kept).
    #[arg(long)]
    pub skip_image_check: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Named preset; defaults to the config file's preset, then `submitted`.
    #[arg(long)]
    pub preset: Option<String>,
    /// A subtask name (e.g. `A`, `B_funny`) or `all`.
    #[arg(long, default_value = "all")]
    pub task: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// A checkpoint file, or a training output directory with one subdirectory per subtask.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to test when labeled, dev otherwise.
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Comma-separated subset of bert, densenet, resnet, bert_densenet, bert_resnet.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<ModelVariant>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Training output directory with one subdirectory per subtask.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub caption: Option<String>,
    /// Comma-separated subtasks; all eight by default.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<String>,
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Verification or validation failed (exit code 1).
    Failed,
}

/// Process exit code for an error: 1 for validation failures, 2 for fatal I/O or config errors.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    use memotion_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::LabelsRequired(_)
                | E::MissingModality { .. }
                | E::EmptyClass { .. }
                | E::InvalidModel(_)
                | E::InvalidEncoder(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

pub fn run(cli: &Cli) -> anyhow::Result<Status> {
    let g = &cli.global;
    match &cli.command {
        Command::Preprocess(a) => commands::preprocess(g, a),
        Command::Verify(a) => commands::verify(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Evaluate(a) => commands::evaluate(g, a),
        Command::Compare(a) => commands::compare(g, a),
        Command::Predict(a) => commands::predict(g, a),
    }
}
