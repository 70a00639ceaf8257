//! `vidgen`: synthesize data, preprocess clips, pretrain the codec and text
//! encoder, train, sample, evaluate and run the conditioning ablation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use vidgen_core::{ConditioningKind, FusionKind};

#[derive(Parser, Debug)]
#[command(name = "vidgen", version, about = "Triplet-conditioned latent video diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render synthetic annotated videos.
    Synth(SynthArgs),
    /// Cut raw videos into annotated clips.
    Preprocess(PreprocessArgs),
    /// Train the latent autoencoder.
    PretrainCodec(PretrainCodecArgs),
    /// Train the triplet caption encoder.
    PretrainText(PretrainTextArgs),
    /// Train the video denoiser.
    Train(TrainArgs),
    /// Generate a clip from a frame and a triplet.
    Sample(SampleArgs),
    /// Score a trained model on a test clip store.
    Eval(EvalArgs),
    /// Train and score every conditioning/fusion variant.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory for the raw video store.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub videos: usize,
    /// Seed for all randomness
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub segments: usize,
    /// Frames per segment; at least 7.
    #[arg(long, default_value_t = 14)]
    pub segment_len: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Keep one scene across segments instead of hard cuts.
    #[arg(long)]
    pub no_cuts: bool,
    /// Insert a run of black frames with empty annotations.
    #[arg(long)]
    pub black: bool,
    /// Make one segment idle (no-action verb, static sprite).
    #[arg(long = "static")]
    pub idle: bool,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Raw video store.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output clip store.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.27)]
    pub cut_threshold: f64,
    /// Frames per clip.
    #[arg(long, default_value_t = 7)]
    pub frames: usize,
    /// Window start spacing inside a scene [default: --frames].
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PretrainCodecArgs {
    /// Clip store to train on.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint file to write; the loss curve goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1500)]
    pub iterations: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    /// Frames per batch.
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Seed for all randomness
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spatial downsample factor (1, 2 or 4).
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    #[arg(long, default_value_t = 4)]
    pub latent_channels: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Parameter-free codec (factor 1); skips training.
    #[arg(long)]
    pub identity: bool,
}

#[derive(Args, Debug)]
pub struct PretrainTextArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Token width; must match the conditioner's token width.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Seed for all randomness
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON lexicon mapping ids to words [default: built-in].
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

/// Model and optimiser flags shared by `train` and `ablate`. Unset flags
/// fall back to `--config`, then to the built-in defaults.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// JSON training config; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Optimiser steps [default: 10000].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Adam learning rate [default: 1e-5].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Clips per batch [default: 8].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seed for initialisation, batch order and noise [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Denoiser width [default: 32]
    #[arg(long)]
    pub base_channels: Option<usize>,
    /// Residual blocks in the denoiser [default: 3]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Width of triplet and image tokens [default: 32]
    #[arg(long)]
    pub token_dim: Option<usize>,
    /// Width of the fused conditioning vector [default: 64]
    #[arg(long)]
    pub cond_dim: Option<usize>,
    /// Disable the temporal attention layers.
    #[arg(long)]
    pub no_temporal: bool,
    /// Gradient-norm ceiling; 0 disables clipping [default: 1.0]
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training clip store.
    #[arg(long)]
    pub data: PathBuf,
    /// Codec checkpoint from pretrain-codec.
    #[arg(long)]
    pub codec: PathBuf,
    /// Text encoder checkpoint (text and text-ft conditioning).
    #[arg(long)]
    pub text_encoder: Option<PathBuf>,
    /// Run directory: config.json, loss.csv, checkpoint/.
    #[arg(long)]
    pub out: PathBuf,
    /// Triplet encoder [default: learnable].
    #[arg(long, value_parser = conditioning_parser())]
    pub conditioning: Option<ConditioningKind>,
    /// Fusion layer [default: linear].
    #[arg(long, value_parser = fusion_parser())]
    pub fusion: Option<FusionKind>,
    /// Save a checkpoint every N iterations.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Model directory written by train.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Clip directory whose first frame and common triplet condition the sample.
    #[arg(long, conflicts_with_all = ["frame", "triplet"])]
    pub clip: Option<PathBuf>,
    /// Conditioning frame (PNG).
    #[arg(long, requires = "triplet")]
    pub frame: Option<PathBuf>,
    /// Triplet as instrument,verb,target ids.
    #[arg(long, requires = "frame")]
    pub triplet: Option<String>,
    /// Output directory for frame_NN.png files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 7)]
    pub frames: usize,
    /// Seed for all randomness
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test clip store; must not share clips with the training store.
    #[arg(long)]
    pub data: PathBuf,
    /// Report path stem; writes <stem>.json and <stem>.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Seed for all randomness
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model name in the report [default: checkpoint directory name].
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// `table2` or comma-separated conditioning:fusion pairs.
    #[arg(long, default_value = "table2")]
    pub grid: String,
    /// Clip store to train on.
    #[arg(long)]
    pub data: PathBuf,
    /// Test clip store [default: held-out part of --data].
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Share of --data held out for testing when --test-data is absent.
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    /// Output CSV; a JSON copy is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Codec checkpoint [default: pretrain one on the training clips].
    #[arg(long)]
    pub codec: Option<PathBuf>,
    /// Text encoder checkpoint [default: pretrain one when the grid needs it].
    #[arg(long)]
    pub text_encoder: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn conditioning_parser() -> impl TypedValueParser<Value = ConditioningKind> {
    PossibleValuesParser::new(ConditioningKind::ALL.map(|k| k.as_str()))
        .map(|s| s.parse::<ConditioningKind>().expect("listed names parse"))
}

fn fusion_parser() -> impl TypedValueParser<Value = FusionKind> {
    PossibleValuesParser::new(FusionKind::ALL.map(|k| k.as_str()))
        .map(|s| s.parse::<FusionKind>().expect("listed names parse"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Preprocess(a) => commands::preprocess(&a),
        Command::PretrainCodec(a) => commands::pretrain_codec(&a),
        Command::PretrainText(a) => commands::pretrain_text(&a),
        Command::Train(a) => commands::train(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
