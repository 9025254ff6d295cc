//! `painnet`: prepare data, train, evaluate and predict.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use painnet_core::eval::EvalMode;
use painnet_core::ErrorKind;

/// Exit status for configuration errors.
pub const EXIT_CONFIG: u8 = 3;
/// Exit status for missing or malformed input data.
pub const EXIT_DATA: u8 = 4;
/// Exit status when an `--assert-*` check fails.
pub const EXIT_ASSERTION: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "painnet", version, about = "Face/body fusion pain classification")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// More log output; repeat for debug.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset: frame directories, detections and a manifest.
    Synth(SynthArgs),
    /// Detect, crop and run the frozen backbones over every manifest video.
    Prepare(PrepareArgs),
    /// Print the per-layer parameter table.
    Summary(SummaryArgs),
    /// Train the fusion head or the temporal model.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Fuse cached backbone maps into per-frame feature vectors.
    Extract(ExtractArgs),
    /// Leave-one-subject-out evaluation.
    EvalLoso(EvalArgs),
    /// Score one video with trained checkpoints.
    Predict(PredictArgs),
    /// NIPS totals, consensus labels and rater agreement for a manifest.
    ScoreNips(ScoreArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    videos_per_subject: Option<usize>,
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    disagreement: Option<f64>,
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// Label manifest; overrides `data.manifest`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Map cache directory; defaults to `<work_dir>/maps`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelKind {
    Fusion,
    Temporal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackboneChoice {
    Vgg16,
    Reduced,
}

#[derive(Debug, Args)]
struct SummaryArgs {
    #[arg(long, value_enum, default_value = "fusion")]
    model: ModelKind,
    #[arg(long, value_enum, default_value = "vgg16")]
    backbone: BackboneChoice,
    /// Override the per-branch dense width of the fusion head.
    #[arg(long)]
    head_width: Option<usize>,
    /// Override the temporal model's output units.
    #[arg(long)]
    output_units: Option<usize>,
    /// Fail unless the counts equal the reference architecture's.
    #[arg(long)]
    assert_paper: bool,
}

#[derive(Debug, Subcommand)]
enum TrainCommand {
    /// Fine-tune the fusion head on every cached frame.
    Fusion {
        #[arg(long)]
        maps: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the temporal model on cached fused features.
    Temporal {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Fusion head checkpoint; defaults to `<work_dir>/head`.
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    FrameLevel,
    VideoLevel,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FrameLevel => EvalMode::FrameLevel,
            ModeArg::VideoLevel => EvalMode::VideoLevel,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Backbone map cache; the head is retrained inside every fold.
    #[arg(long, conflicts_with = "features")]
    maps: Option<PathBuf>,
    /// Fused feature cache; only the temporal model is trained per fold.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Frame directory of the video to score.
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long)]
    temporal: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// A failed `--assert-*` check.
#[derive(Debug)]
pub struct AssertionFailed(pub String);

impl std::fmt::Display for AssertionFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "assertion failed: {}", self.0)
    }
}

impl std::error::Error for AssertionFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<AssertionFailed>().is_some() {
        return EXIT_ASSERTION;
    }
    match err.downcast_ref::<painnet_core::Error>().map(|e| e.kind()) {
        Some(ErrorKind::Config) => EXIT_CONFIG,
        Some(ErrorKind::Data) => EXIT_DATA,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
