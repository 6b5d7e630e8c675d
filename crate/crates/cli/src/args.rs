use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cmdis::synthgen::TransformKind;

pub const DEFAULT_OUT: &str = "cmdis-out";

#[derive(Parser, Debug, Serialize)]
#[command(name = "cmdis", version, about = "Copy-move forgery source/target disambiguation")]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, env = "CMDIS_OUT", default_value = DEFAULT_OUT)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Validate the configuration and exit without writing anything.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic copy-move dataset.
    Gen(GenArgs),
    /// Disambiguate one image given its copy-move mask.
    Disambiguate(DisambiguateArgs),
    /// Train the twin or siamese scorer on a generated dataset.
    Train(TrainArgs),
    /// Evaluate the disambiguator on a generated dataset.
    Eval(EvalArgs),
    /// Re-evaluate a dataset under post-processing or mask degradation.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Disambiguate(_) => "disambiguate",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
        }
    }
}

fn parse_kind(s: &str) -> Result<TransformKind, String> {
    TransformKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = TransformKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown kind `{s}` (expected one of {})", names.join(", "))
    })
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub count: u64,
    #[arg(long, value_parser = parse_kind)]
    pub kind: TransformKind,
    /// Index of the first record.
    #[arg(long, default_value_t = 0)]
    pub start: u64,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub source_box: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub vertices: usize,
    #[arg(long, default_value_t = 0.5)]
    pub pp_probability: f64,
    #[arg(long)]
    pub no_blend: bool,
    /// No blending and no post-processing.
    #[arg(long)]
    pub clean: bool,
    /// Directory of background images (default: procedural textures).
    #[arg(long)]
    pub backgrounds: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub pool_size: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerName {
    Mse,
    Twin,
    Siamese,
}

#[derive(Args, Debug, Serialize)]
pub struct ScoringArgs {
    #[arg(long, value_delimiter = ',', default_value = "mse")]
    pub scorers: Vec<ScorerName>,
    /// Directory holding twin.json and/or siamese.json checkpoints.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Fusion constant c.
    #[arg(long, default_value_t = 0.65)]
    pub fusion_c: f64,
}

#[derive(Args, Debug, Serialize)]
#[command(group = clap::ArgGroup::new("regions").required(true))]
pub struct DisambiguateArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Binary detector mask (0/255); pre-processed before use.
    #[arg(long, group = "regions")]
    pub mask: Option<PathBuf>,
    /// Ground-truth source/target map as written by `gen`.
    #[arg(long, group = "regions")]
    pub labels: Option<PathBuf>,
    /// JSON transform mapping the larger region onto the smaller one
    /// (default: estimated from the mask).
    #[arg(long)]
    pub transform: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchName {
    Twin,
    Siamese,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub arch: ArchName,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Train the twin on exact transforms only.
    #[arg(long)]
    pub no_perturb: bool,
    /// Keep the member order of each twin pair fixed.
    #[arg(long)]
    pub no_shuffle: bool,
    #[arg(long, value_delimiter = ',', default_value = "8,16,16,32")]
    pub channels: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    pub feature_dim: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    /// Ground-truth regions and transform.
    Known,
    /// Ground-truth regions, estimated transform.
    Estimated,
    /// Unlabeled mask through pre-processing, estimated transform.
    Detector,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "estimated")]
    pub scenario: ScenarioName,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisName {
    Jpeg,
    Noise,
    Resize,
    Dilate,
    Erode,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub axis: AxisName,
    /// Grid values (default: the axis' standard grid).
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "estimated")]
    pub scenario: ScenarioName,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}
