//! `scarquant`: phantom generation, pipeline runs, QC, synthesis, metrics,
//! ablations and reports.
//!
//! Exit codes: 0 success, 1 input error, 2 config error, 3 partial result.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "scarquant", version, about = "Cascaded LGE cardiac MR scar quantification")]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a NIfTI directory and write the subject manifest.
    Ingest(IngestArgs),
    /// Generate a phantom population.
    Phantom(PhantomArgs),
    /// Run the pipeline on a dataset.
    Segment(SegmentArgs),
    /// Closedness and scar-ratio checks on a label directory.
    Qc(QcArgs),
    /// Emit an augmented synthetic dataset.
    Synth(SynthArgs),
    /// Compare a prediction directory against reference labels.
    Metrics(MetricsArgs),
    /// Run several configurations and compare them slice by slice.
    Ablate(AblateArgs),
    /// Summaries and plots from a metrics CSV.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Directory of `<id>_image.nii` files with optional `<id>_label.nii`.
    #[arg(long)]
    pub data: PathBuf,
    /// Manifest path (default: `<data>/subjects.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// auto, as-stored or reversed.
    #[arg(long, default_value = "auto")]
    pub slice_order: String,
    /// Also write `split.csv` holding out this fraction as a test set.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 0.5)]
    pub pathological_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian noise sd added to the class intensities.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub slices: Option<usize>,
    /// In-plane grid size.
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// a, b, c, d or e.
    #[arg(long)]
    pub variant: Option<String>,
    /// em, oracle or import:<dir>.
    #[arg(long)]
    pub myo_seg: Option<String>,
    /// nsd, <n>sd, fwhm, otsu, em, oracle or import:<dir>.
    #[arg(long)]
    pub scar_seg: Option<String>,
    /// none, heuristic, oracle or external:<csv>.
    #[arg(long)]
    pub regressor: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Replace the myocardium stage output with the reference wall.
    #[arg(long)]
    pub gt_myocardium: bool,
    /// Skip writing `<id>_pred.nii` files.
    #[arg(long)]
    pub no_predictions: bool,
}

#[derive(Args)]
pub struct QcArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// File suffix of the label volumes.
    #[arg(long, default_value = "_label.nii")]
    pub suffix: String,
    #[arg(long, default_value_t = scarquant_core::qc::MIN_SCAR_RATIO)]
    pub min_scar_ratio: f64,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub augmentations: usize,
    /// Skip the label/style swaps between normal and pathological subjects.
    #[arg(long)]
    pub no_swaps: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub blend_sigma: Option<f64>,
    /// Noise sd as a fraction of the style intensity range.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "_pred.nii")]
    pub pred_suffix: String,
    #[arg(long, default_value = "_label.nii")]
    pub gt_suffix: String,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated variants run with default settings.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    /// Named config files, `NAME=FILE`.
    #[arg(long = "config", value_name = "NAME=FILE")]
    pub configs: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Metrics CSV written by `segment` or `metrics`.
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Phantom(a) => commands::phantom(a),
        Command::Segment(a) => commands::segment(a),
        Command::Qc(a) => commands::qc(a),
        Command::Synth(a) => commands::synth(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(commands::Outcome::Complete) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Partial) => {
            eprintln!("warning: completed with failures");
            ExitCode::from(3)
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.kind.code())
        }
    }
}
