//! `periscope`: ocular verification pipeline on the command line.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use periscope_core::geometry::BorderMode;
use periscope_core::matcher::{Metric, Normalization, Polarity};
use periscope_core::Pose;

use crate::config::{RunConfig, Threads};

#[derive(Parser, Debug)]
#[command(name = "periscope", version, about = "Ocular verification toolkit: crops, protocols, scoring, fusion and DET/EER metrics")]
pub struct Cli {
    /// Config file of key=value lines (flags override it).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads: a positive integer or `auto`.
    #[arg(long, global = true, value_name = "N|auto")]
    threads: Option<Threads>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write a JSON run report (config, input digests, counts, timing).
    #[arg(long, global = true, value_name = "FILE")]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Align faces and cut the two 113×113 eye crops.
    Crop(CropArgs),
    /// Generate a genuine/impostor pair list.
    Pairs(PairsArgs),
    /// Score a pair list against an embedding store.
    Score(ScoreArgs),
    /// Weighted fusion of two aligned score files, or a weight sweep.
    Fuse(FuseArgs),
    /// EER/AUC report and DET export for one or more score files.
    Metrics(MetricsArgs),
    /// Write a seeded synthetic embedding store and matching manifest.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct CropArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Image root; images are looked up as <DIR>/<subject>/<image> or <DIR>/<image>.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub target_ied: Option<f64>,
    #[arg(long)]
    pub three_quarter_ied: Option<f64>,
    #[arg(long)]
    pub min_ied: Option<f64>,
    #[arg(long)]
    pub frontality_ratio: Option<f64>,
    #[arg(long, value_enum)]
    pub border: Option<BorderArg>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum BorderArg {
    Zero,
    Replicate,
}

impl From<BorderArg> for BorderMode {
    fn from(b: BorderArg) -> Self {
        match b {
            BorderArg::Zero => BorderMode::Zero,
            BorderArg::Replicate => BorderMode::Replicate,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    SamePose,
    CrossPose,
    Ufpr,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum UfprModeArg {
    External,
    PerEyeExhaustive,
}

#[derive(Args, Debug)]
pub struct PairsArgs {
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Pose for same-pose pairs.
    #[arg(long, default_value = "frontal", value_parser = parse_pose)]
    pub pose: Pose,
    #[arg(long, default_value = "frontal", value_parser = parse_pose)]
    pub pose_a: Pose,
    #[arg(long, default_value = "three_quarter", value_parser = parse_pose)]
    pub pose_b: Pose,
    /// Fold definition file (ufpr).
    #[arg(long)]
    pub folds: Option<PathBuf>,
    /// Fold number to generate (ufpr).
    #[arg(long)]
    pub fold: Option<u32>,
    #[arg(long, value_enum, default_value = "external")]
    pub mode: UfprModeArg,
    /// Official pair list for ufpr external mode.
    #[arg(long)]
    pub official: Option<PathBuf>,
    /// Print closed-form counts as JSON instead of writing pairs.
    #[arg(long)]
    pub counts_only: bool,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    /// Clamp negative embedding values to zero instead of rejecting them.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PolarityArgs {
    /// Metric the scores came from; sets the polarity.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    /// Explicit polarity; overrides --metric.
    #[arg(long, value_parser = parse_polarity)]
    pub polarity: Option<Polarity>,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    pub scores_a: PathBuf,
    pub scores_b: PathBuf,
    /// Weight of the first system.
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    pub weight: Option<f64>,
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, default_value_t = 0.1)]
    pub grid_step: f64,
    #[arg(long, value_parser = parse_normalization)]
    pub normalize: Option<Normalization>,
    #[command(flatten)]
    pub polarity: PolarityArgs,
    /// Fused score file (weight mode).
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
    /// `a,eer_pct` table (sweep mode).
    #[arg(long)]
    pub sweep_csv: Option<PathBuf>,
    /// DET export of the fused scores (weight mode).
    #[arg(long)]
    pub det: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// One score file, or one per fold.
    #[arg(required = true)]
    pub scores: Vec<PathBuf>,
    #[command(flatten)]
    pub polarity: PolarityArgs,
    /// DET export (pooled over all files when several are given).
    #[arg(long)]
    pub det: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: usize,
    #[arg(long)]
    pub images: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// Seed for per-image noise; defaults to --seed.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "frontal", value_parser = parse_pose)]
    pub poses: Vec<Pose>,
    /// Output directory for embeddings.txt and manifest.csv.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse()
}

fn parse_polarity(s: &str) -> Result<Polarity, String> {
    s.parse()
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    s.parse()
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_file(&text).map_err(CliError::Usage)?;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<bool> {
    let config = resolve_config(&cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Threads::Fixed(n) = config.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Data(e.into()))?;
    let args: Vec<String> = std::env::args().collect();
    pool.install(|| commands::dispatch(&cli.command, config, &args, cli.report.as_deref()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("periscope: usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(err)) => {
            eprintln!("periscope: error: {err:#}");
            ExitCode::from(1)
        }
    }
}
