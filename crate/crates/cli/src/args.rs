use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pse", version, about = "Personalized speech enhancement toolkit")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// File of `key = value` lines supplying flag defaults; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Worker threads (also capped by PSE_NUM_THREADS).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a mono WAV file.
    Enhance(EnhanceArgs),
    /// Generate a mixture dataset and its manifest.
    Mix(MixArgs),
    /// Train a model on a manifest.
    TrainToy(TrainArgs),
    /// Score a model on a manifest, per pn/ps/psn subset.
    Eval(EvalArgs),
    /// Report parameters, MACs per second and real-time factor.
    Bench(BenchArgs),
    /// Compute a toy enrollment embedding from a WAV file.
    Embed(EmbedArgs),
    /// Print the metadata and tensors of a container file.
    Inspect(InspectArgs),
    /// Write a synthetic two-voice corpus laid out for `mix`.
    ToyCorpus(ToyCorpusArgs),
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    /// Expected variant; refused when the model file says otherwise.
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Dist {
    /// Training recipe: 20/30/50 categories, truncated-normal levels.
    Gaussian,
    /// Test recipe: equal categories, uniform levels.
    Uniform,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub target_dir: PathBuf,
    #[arg(long)]
    pub interf_dir: PathBuf,
    #[arg(long)]
    pub noise_dir: PathBuf,
    #[arg(long)]
    pub hours: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub dist: Dist,
    #[arg(long, default_value_t = 5.0)]
    pub clip_secs: f64,
    /// Defaults to the rate of the first readable target file.
    #[arg(long)]
    pub sample_rate: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Size {
    /// Narrow layers for desk-scale runs.
    Small,
    /// Full-width layers.
    Full,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to the last tenth of the training manifest.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// Directory of `<speaker>.emb` files; required for personalized variants.
    #[arg(long)]
    pub embeddings_dir: Option<PathBuf>,
    #[arg(long, default_value = "unified")]
    pub variant: String,
    /// Output directory for checkpoints, history and the final model.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value = "small")]
    pub size: Size,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings_dir: Option<PathBuf>,
    /// CSV path; the text summary goes next to it with a .txt extension.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model file; without it a freshly initialized full-width model is used.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Variant of the freshly initialized model.
    #[arg(long, default_value = "unified")]
    pub variant: String,
    #[arg(long, default_value_t = 30.0)]
    pub secs: f64,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16_000)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 8)]
    pub utterances: usize,
    #[arg(long, default_value_t = 12.0)]
    pub utterance_secs: f64,
}
