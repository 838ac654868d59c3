//! `vidaug`: apply augmentations, rasterize masks, generate synthetic data,
//! train and evaluate the linear probe, and run ablation recipes.
//!
//! Exit codes: 0 success, 1 I/O error, 2 validation or configuration error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vidaug::Error;

#[derive(Debug, Parser)]
#[command(name = "vidaug", version, about = "Video clip augmentation and semi-supervised training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Augment a batch of clips and write them with JSON sidecars.
    Augment(AugmentArgs),
    /// Turn detector boxes into single-channel mask clips.
    Rasterize(RasterizeArgs),
    /// Write the synthetic scene-biased dataset to disk.
    GenData(GenDataArgs),
    /// Train the linear probe on a dataset directory.
    Train(TrainArgs),
    /// Report the accuracy of a checkpoint on a labeled split.
    Eval(EvalArgs),
    /// Run an ablation recipe over several seeds and write a summary CSV.
    Ablate(AblateArgs),
    /// Write a clip as a horizontal frame strip (PGM or PPM).
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Input `.vclip` files or directories of them; processed as one batch.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Output directory for `<id>.vclip` and `<id>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Policy JSON file.
    #[arg(long)]
    pub policy: PathBuf,
    /// Override the policy's mode.
    #[arg(long)]
    pub mode: Option<String>,
    /// Detector boxes (JSON lines); required when the policy can mix clips.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    /// `clip_id,class` CSV; clips without labels get a uniform label.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub num_classes: usize,
    #[arg(long, default_value_t = 0.5)]
    pub score_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    /// Detector boxes (JSON lines).
    #[arg(long)]
    pub boxes: PathBuf,
    /// Clips whose shapes the masks take; files or directories.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Output directory for `<id>.vclip` masks (0 or 255).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub score_threshold: f64,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset spec JSON; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub labeled_per_class: Option<usize>,
    #[arg(long)]
    pub unlabeled_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub scene_bias: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root with `labeled/` and optional `unlabeled/`,
    /// `test_biased/`, `test_decorrelated/`.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the trained model.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Trainer config JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Strong augmentation policy JSON; defaults to the full strong policy.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Train on labeled clips only.
    #[arg(long)]
    pub supervised: bool,
    /// Apply the strong policy to labeled clips too.
    #[arg(long)]
    pub strong_labeled: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda_u: Option<f64>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub score_threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split directory with clips and `labels.csv`.
    #[arg(long)]
    pub data: PathBuf,
    /// Write `clip_id,label,predicted` rows here.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// coherence, temporal, actorcutmix, intra-combine or intra-cross.
    #[arg(long)]
    pub recipe: String,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to `<csv stem>_checkpoints` next to the CSV.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub strip_out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else {
        1
    }
}

fn configure_threads() -> vidaug::Result<()> {
    let Ok(v) = std::env::var("VIDAUG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("VIDAUG_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Augment(a) => commands::augment(&a),
        Command::Rasterize(a) => commands::rasterize(&a),
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Inspect(a) => commands::inspect(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vidaug: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
