use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vistacast_core::eval::Variant;
use vistacast_core::fusion::{LabelSource, SnapshotKind};

#[derive(Debug, Parser)]
#[command(name = "vistacast", version, about = "Scenic-visibility forecasting from webcams and weather forecasts")]
pub struct Cli {
    /// Data root holding raw/, fused/, models/, reports/ and logs/.
    #[arg(long, global = true, default_value = "data")]
    pub data_root: PathBuf,

    /// TOML settings; flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic data root (registry, frames, weather).
    Synth(SynthArgs),
    /// Replay scheduler ticks: ingest dropped frames and fetch forecasts.
    Collect(CollectArgs),
    /// Grayness, corruption and duplicate checks on stored frames.
    Qc(QcArgs),
    /// Write human labels as CSV.
    LabelExport(LabelExportArgs),
    /// Build the fused day-level datasets.
    Fuse(FuseArgs),
    /// Fit and save the model for one horizon.
    Train(TrainArgs),
    /// Grouped cross-validation over horizons and variants.
    Evaluate(EvaluateArgs),
    /// Re-render report tables from stored results.
    Report,
    /// Visibility probability for one camera and horizon.
    Predict(PredictArgs),
    /// Run the HTTP labeling and prediction service.
    Serve(ServeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Synth(_) => "synth",
            Self::Collect(_) => "collect",
            Self::Qc(_) => "qc",
            Self::LabelExport(_) => "label-export",
            Self::Fuse(_) => "fuse",
            Self::Train(_) => "train",
            Self::Evaluate(_) => "evaluate",
            Self::Report => "report",
            Self::Predict(_) => "predict",
            Self::Serve(_) => "serve",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub cameras: usize,
    #[arg(long, default_value_t = 120)]
    pub days: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write small PNG frames under raw/images.
    #[arg(long)]
    pub images: bool,
    /// Record the generator's ground truth as human labels.
    #[arg(long)]
    pub with_labels: bool,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    /// First tick (RFC 3339, or a date meaning its UTC midnight).
    #[arg(long)]
    pub from: String,
    /// Last tick, inclusive.
    #[arg(long)]
    pub to: String,
    /// Directory of `<camera>/<YYYYMMDDTHHMMZ>.<ext>` images to ingest.
    #[arg(long)]
    pub drop: Option<PathBuf>,
    /// Read forecasts from recorded responses in this directory.
    #[arg(long, conflicts_with = "live")]
    pub fixtures: Option<PathBuf>,
    /// Fetch forecasts over HTTP.
    #[arg(long)]
    pub live: bool,
}

#[derive(Debug, Args)]
pub struct QcArgs {
    /// Grayness fraction above which a frame is flagged.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub camera: Option<String>,
    /// Restrict to one month, YYYY-MM (UTC).
    #[arg(long)]
    pub month: Option<String>,
}

#[derive(Debug, Args)]
pub struct LabelExportArgs {
    /// Output file; `-` for stdout. Defaults to reports/labels.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Every submission and retraction instead of the active labels.
    #[arg(long)]
    pub history: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    FirstFrame,
    MorningWindow,
    Both,
}

impl KindArg {
    pub fn kinds(self) -> Vec<SnapshotKind> {
        match self {
            Self::FirstFrame => vec![SnapshotKind::FirstFrame],
            Self::MorningWindow => vec![SnapshotKind::MorningWindow],
            Self::Both => SnapshotKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelSourceArg {
    Vision,
    Gold,
}

impl From<LabelSourceArg> for LabelSource {
    fn from(a: LabelSourceArg) -> Self {
        match a {
            LabelSourceArg::Vision => LabelSource::Vision,
            LabelSourceArg::Gold => LabelSource::Gold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    YoloOnly,
    WeatherOnly,
    Fusion,
}

impl From<VariantArg> for Variant {
    fn from(a: VariantArg) -> Self {
        match a {
            VariantArg::YoloOnly => Variant::YoloOnly,
            VariantArg::WeatherOnly => Variant::WeatherOnly,
            VariantArg::Fusion => Variant::Fusion,
        }
    }
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    /// Visible-fraction threshold for a day label.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub label_source: Option<LabelSourceArg>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: KindArg,
}

/// Overrides for the boosting parameters.
#[derive(Debug, Args)]
pub struct GbdtArgs {
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub leaves: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub min_child_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub horizon: i64,
    #[arg(long, value_enum, default_value = "fusion")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "first-frame")]
    pub kind: KindArg,
    /// Leave site metadata out of the features.
    #[arg(long)]
    pub no_meta: bool,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub gbdt: GbdtArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: KindArg,
    #[arg(long)]
    pub no_meta: bool,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub gbdt: GbdtArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub camera: String,
    #[arg(long)]
    pub horizon: i64,
    /// Snapshot date (local); defaults to the camera's latest usable day.
    #[arg(long)]
    pub date: Option<chrono::NaiveDate>,
    /// Print the full prediction as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub lease_secs: Option<u64>,
}
