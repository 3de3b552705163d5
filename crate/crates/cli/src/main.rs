//! `mp3gan`: prepare a corpus, train, restore songs, evaluate and plot
//! frequency profiles.
//!
//! Exit codes: 0 success, 2 configuration error, 3 external tool error,
//! 4 data error.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mp3gan::dataset::codec::Bitrate;
use mp3gan::dataset::split::Split;
use mp3gan::evaluation::{Metric, System};

#[derive(Parser, Debug)]
#[command(name = "mp3gan", version, about = "Restore MP3-compressed music with a conditional GAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML settings file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that receives all outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode, decode, align and split a corpus of mono WAV files.
    Prepare(PrepareArgs),
    /// Train a generator and critic on a prepared corpus.
    Train(TrainArgs),
    /// Restore a decoded MP3 file with a trained generator.
    Restore(RestoreArgs),
    /// Compute objective metrics on a split of a prepared corpus.
    Evaluate(EvaluateArgs),
    /// Plot frequency profiles of restorations for fixed noise vectors.
    Profile(ProfileArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of mono WAV files.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated list, e.g. 16k,32k,64k.
    #[arg(long, value_delimiter = ',')]
    pub bitrates: Option<Vec<Bitrate>>,
    /// Train, eval and test fractions, e.g. 0.8,0.1,0.1.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ratios: Option<Vec<f64>>,
    /// Convert WAV files at other sample rates to 44.1 kHz.
    #[arg(long)]
    pub resample: bool,
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    #[arg(long)]
    pub decoder: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long, conflicts_with = "deterministic")]
    pub stochastic: bool,
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub bitrate: Option<Bitrate>,
    /// Architecture preset: full, small or tiny.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub segment_frames: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RestoreArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Decoded MP3 audio as a mono WAV file.
    #[arg(long)]
    pub input: PathBuf,
    /// File with the noise vector, whitespace-separated numbers.
    #[arg(long, conflicts_with = "z_seed")]
    pub z_file: Option<PathBuf>,
    /// Seed for drawing noise vectors; defaults to --seed.
    #[arg(long)]
    pub z_seed: Option<u64>,
    /// Number of restorations with different noise vectors.
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub resample: bool,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "restored.wav")]
    pub output: String,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    /// Comma-separated list of mp3, det and sto.
    #[arg(long, value_delimiter = ',')]
    pub systems: Option<Vec<System>>,
    #[arg(long, value_delimiter = ',')]
    pub bitrates: Option<Vec<Bitrate>>,
    /// Generator for the det system.
    #[arg(long)]
    pub det_checkpoint: Option<PathBuf>,
    /// Generator for the sto system.
    #[arg(long)]
    pub sto_checkpoint: Option<PathBuf>,
    /// Generator for whichever model system is requested.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub selection_metric: Option<Metric>,
    #[arg(long)]
    pub excerpt_frames: Option<usize>,
    #[arg(long)]
    pub excerpts_per_song: Option<usize>,
    /// PEAQ executable; defaults to MP3GAN_PEAQ.
    #[arg(long)]
    pub peaq: Option<String>,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub bitrate: Option<Bitrate>,
    #[arg(long)]
    pub z_count: Option<usize>,
    #[arg(long)]
    pub excerpt_count: Option<usize>,
    #[arg(long)]
    pub excerpt_frames: Option<usize>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train(a),
        Command::Restore(a) => commands::restore(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Profile(a) => commands::profile(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
