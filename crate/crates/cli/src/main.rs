mod commands;
mod config;
mod swatch;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Skin-tone estimation, agreement statistics and dataset audits.
#[derive(Debug, Parser)]
#[command(name = "tonemeter", version, about)]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with known ground truth.
    Synth(SynthArgs),
    /// Train one model per cross-validation fold.
    Train(TrainArgs),
    /// Predict Fitzpatrick type, Lab and ITA for a set of images.
    Estimate(EstimateArgs),
    /// Agreement tables against manifest references.
    Eval(EvalArgs),
    /// One agreement metric from a prediction CSV.
    Stats(StatsArgs),
    /// Fitzpatrick composition and ITA histogram of a dataset.
    Audit(AuditArgs),
    /// Render color swatches as a PNG grid.
    Swatch(SwatchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (images/, masks/, manifest.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of images.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub images_per_subject: Option<usize>,
    /// Edge length in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub lesion_probability: Option<f64>,
    /// Disable gain, ramp and color cast.
    #[arg(long)]
    pub identity_illumination: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    /// CORAL ordinal Fitzpatrick head.
    Ordinal,
    /// Softmax Fitzpatrick head.
    Softmax,
    /// CIELAB regression head.
    Lab,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub head: HeadArg,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for fold checkpoints and reports.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Restrict training images by modality.
    #[arg(long, default_value = "all")]
    pub modality: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorKind {
    Network,
    Kmeans,
    Patch,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "network")]
    pub estimator: EstimatorKind,
    /// Checkpoint files or directories of `*.ckpt` (network estimator).
    #[arg(long, num_args = 1..)]
    pub checkpoints: Vec<PathBuf>,
    /// Apply Shades-of-Gray white balancing before estimation.
    #[arg(long)]
    pub white_balance: bool,
    /// Modality filter: all, dermatoscopic or clinical.
    #[arg(long, default_value = "all")]
    pub modality: String,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Manifest, directory with manifest.csv, or directory of PNG files.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Prediction CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Bootstrap resamples for confidence intervals (0 = none).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Also run with white balancing toggled and tabulate per-type ITA bias.
    #[arg(long)]
    pub white_balance_ablation: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Prediction CSV.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Manifest holding the references.
    #[arg(long)]
    pub manifest: PathBuf,
    /// kappa, icc3, ordinal or bland-altman.
    #[arg(long)]
    pub metric: String,
    /// Also report per stratum (only `site` is supported).
    #[arg(long)]
    pub by: Option<String>,
    /// Bootstrap resamples (0 = none).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Output file; `.csv` selects CSV, anything else JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long)]
    pub hist_lo: Option<f64>,
    #[arg(long)]
    pub hist_hi: Option<f64>,
    #[arg(long)]
    pub hist_width: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SwatchArgs {
    /// Lab triple `L,a,b`; repeatable.
    #[arg(long, value_name = "L,a,b", allow_hyphen_values = true)]
    pub lab: Vec<String>,
    /// Prediction CSV (with --manifest for thumbnails and reference colors).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Cell edge in pixels.
    #[arg(long, default_value_t = 32)]
    pub cell: usize,
    /// Output PNG; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
