//! Command-line front end: dataset synthesis, saliency maps, box
//! generation, evaluation, annotator consistency and parameter search.

pub mod commands;
pub mod config;
pub mod frames;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::frames::BoxMode;
use lightkp::imaging::Connectivity;

/// Exit status for schema, validation and argument failures.
pub const EXIT_INVALID: i32 = 1;
/// Exit status for file-system failures.
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lightkp", version, about = "Light-artifact keypoint tooling")]
pub struct Cli {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Halve the resolution before generating boxes.
    #[arg(long, global = true)]
    pub half_res: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset of Gaussian light blobs.
    Synth(SynthArgs),
    /// Write one saliency map per annotated instance.
    Saliency(SaliencyArgs),
    /// Generate bounding boxes for every frame.
    Genboxes(GenboxesArgs),
    /// Score predictions against the dataset keypoints.
    #[command(subcommand)]
    Eval(EvalKind),
    /// Agreement statistics between annotators' boxes.
    Consistency(ConsistencyArgs),
    /// Random search over box-generation parameters.
    Tune(TuneArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset directory to create.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub scenes: u64,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 3)]
    pub blobs: usize,
    #[arg(long, default_value_t = 128)]
    pub width: u32,
    #[arg(long, default_value_t = 128)]
    pub height: u32,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.5)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 2.5)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 180.0)]
    pub amplitude_min: f64,
    #[arg(long, default_value_t = 250.0)]
    pub amplitude_max: f64,
    /// Minimum blob distance in units of the largest sigma.
    #[arg(long, default_value_t = 8.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.5)]
    pub indirect_probability: f64,
    /// Number of leading scenes marked as validation split (default: all).
    #[arg(long)]
    pub validation: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub step: Option<u32>,
    #[arg(long)]
    pub cap_factor: Option<f64>,
    #[arg(long, value_parser = parse_connectivity)]
    pub connectivity: Option<Connectivity>,
    /// Also write the per-frame maximum over all instance maps.
    #[arg(long)]
    pub combined: bool,
    /// Also write raw little-endian f32 maps next to the PNGs.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct GenboxesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = BoxMode::Adaptive)]
    pub mode: BoxMode,
    #[arg(long)]
    pub window: Option<u32>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub min_area: Option<usize>,
    #[arg(long)]
    pub max_boxes: Option<usize>,
    #[arg(long)]
    pub rel_factor: Option<f64>,
    #[arg(long, value_parser = parse_connectivity)]
    pub connectivity: Option<Connectivity>,
}

#[derive(Debug, Subcommand)]
pub enum EvalKind {
    /// Box predictions: one `{"frame_id", "boxes"}` file per frame.
    Boxes(EvalArgs),
    /// Keypoint predictions: one `{"frame_id", "keypoints"}` file per frame.
    Keypoints(EvalArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory holding `scene_<id>/frame_<id>.json` prediction files.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Comma-separated similarity thresholds (keypoints only).
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    /// Annotator files, at least two.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of parameter draws.
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    match s {
        "4" => Ok(Connectivity::Four),
        "8" => Ok(Connectivity::Eight),
        other => Err(format!("connectivity must be 4 or 8, got {other}")),
    }
}

/// Runs the parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.half_res |= cli.half_res;
    match cli.command {
        Command::Synth(args) => commands::synth::run(&mut cfg, args),
        Command::Saliency(args) => commands::saliency::run(&mut cfg, args),
        Command::Genboxes(args) => commands::genboxes::run(&mut cfg, args),
        Command::Eval(EvalKind::Boxes(args)) => commands::eval::run_boxes(&mut cfg, args),
        Command::Eval(EvalKind::Keypoints(args)) => commands::eval::run_keypoints(&mut cfg, args),
        Command::Consistency(args) => commands::consistency::run(&mut cfg, args),
        Command::Tune(args) => commands::tune::run(&mut cfg, args),
    }
}

/// File-system failures map to [`EXIT_IO`], everything else to
/// [`EXIT_INVALID`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let io = err.chain().any(|cause| {
        cause.is::<std::io::Error>()
            || matches!(
                cause.downcast_ref::<lightkp::Error>(),
                Some(lightkp::Error::Io { .. })
            )
    });
    if io {
        EXIT_IO
    } else {
        EXIT_INVALID
    }
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
    }
}
