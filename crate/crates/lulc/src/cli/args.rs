use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "lulc", version, about = "Autoregressive modeling and inpainting of categorical rasters")]
pub struct Cli {
    /// Worker threads for sampling, coverage and chains (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Generate synthetic landscapes.
    Synth(SynthArgs),
    /// Coarsen source rasters and extract training windows.
    Prepare(PrepareArgs),
    /// Train the network on a directory of windows.
    Train(TrainArgs),
    /// Unconditional samples.
    Sample(SampleArgs),
    /// Complete the missing pixels of a raster.
    Inpaint(InpaintArgs),
    /// Fill a hole larger than the model window, window by window.
    TileInfill(TileInfillArgs),
    /// Landscape statistics of rasters.
    Stats(StatsArgs),
    /// Interval coverage of sampled statistics.
    Calibrate(CalibrateArgs),
    /// Per-image log-likelihood.
    Score(ScoreArgs),
    /// Interpolated surface of per-image scores.
    LikelihoodMap(LikelihoodMapArgs),
    /// Fit the spatial CAR benchmark by HMC.
    SccarFit(SccarFitArgs),
    /// Posterior-predictive completions from CAR draws.
    SccarInpaint(SccarInpaintArgs),
    /// Render a raster as a PPM image.
    ExportPpm(ExportPpmArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 48)]
    pub height: usize,
    #[arg(long, default_value_t = 48)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub smoothing_radius: usize,
    #[arg(long, default_value_t = 2)]
    pub smoothing_passes: usize,
    #[arg(long, default_value_t = 1000)]
    pub dominance: u32,
    #[arg(long, default_value_t = 0.5)]
    pub road_probability: f64,
    #[arg(long, default_value_t = 0.3)]
    pub water_probability: f64,
    /// Also write a mask of this family beside each raster.
    #[arg(long, value_enum, conflicts_with = "hole")]
    pub mask: Option<MaskArg>,
    /// Also write a mask with the rectangle `row,col,height,width` missing.
    #[arg(long, value_delimiter = ',')]
    pub hole: Option<Vec<usize>>,
}

#[derive(Debug, Args, Serialize)]
pub struct PrepareArgs {
    /// Source rasters or directories of them.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Majority-coarsening factor applied first; 1 disables it.
    #[arg(long, default_value_t = 3)]
    pub coarsen: usize,
    #[arg(long, default_value_t = 40)]
    pub window: usize,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub water_class: u8,
    #[arg(long, default_value_t = 0.5)]
    pub water_limit: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_rejections: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Directory of training windows.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory of held-out windows; otherwise the last `--heldout-fraction`
    /// of `--data` (by file name) is held out.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub heldout_fraction: f64,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// JSON model configuration overriding the preset.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint written after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV; defaults to `train_log.csv` beside the checkpoint.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from a checkpoint that carries optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationArg {
    Identity,
    RandomFlips,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temp: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InpaintArgs {
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temp: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OrientationArg::Identity)]
    pub orientation: OrientationArg,
    /// Defaults to the directory of `--raster`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TileInfillArgs {
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 25)]
    pub count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temp: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Context kept above and left of each step; defaults to 27/40 of the
    /// model window.
    #[arg(long)]
    pub margin: Option<usize>,
    /// Mirror each window randomly before sampling it.
    #[arg(long)]
    pub flips: bool,
    /// Classes counted by the probability map; defaults to the developed
    /// classes present in the raster.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<u8>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Rasters or directories of them.
    #[arg(long = "raster", required = true)]
    pub rasters: Vec<PathBuf>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskArg {
    TopMissing,
    BottomMissing,
    CenterMissing,
    AllMissing,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, value_delimiter = ',', default_values_t = lulc_core::landstat::DEFAULT_TEMPERATURES.to_vec())]
    pub temps: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MaskArg::CenterMissing)]
    pub mask: MaskArg,
    #[arg(long, value_enum, default_value_t = OrientationArg::Identity)]
    pub orientation: OrientationArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LikelihoodMapArgs {
    /// CSV with columns x, y, value; otherwise the windows of `--manifest`
    /// are scored with `--checkpoint` and placed at their centers.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory of the windows listed in the manifest, in manifest order.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Manifest source whose windows are mapped.
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Grid spacing in the units of the point coordinates.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Kernel length scale; defaults to a fifth of the larger data extent.
    #[arg(long)]
    pub length_scale: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SccarFitArgs {
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 2000)]
    pub tune: usize,
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.9)]
    pub target_accept: f64,
    #[arg(long, default_value_t = 32)]
    pub leapfrog_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SccarInpaintArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportPpmArgs {
    #[arg(long)]
    pub raster: PathBuf,
    /// JSON palette; defaults to the land cover legend for 20 classes and
    /// evenly spaced hues otherwise.
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
