use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tinydeploy::detect::{DEFAULT_IOU_THR, DEFAULT_SCORE_THR, DEFAULT_TOP_K};
use tinydeploy::perfmodel::Engine;
use tinydeploy::planner::Precision;

#[derive(Debug, Parser)]
#[command(name = "tinydeploy", version, about = "Deployment planning and detection post-processing for tiny CNN detectors")]
pub struct Cli {
    #[command(flatten)]
    pub output: Output,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Print the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Print nothing on success.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct Duty {
    /// Inferences per day.
    #[arg(long, default_value_t = 1440)]
    pub duty: u64,
    /// Count the radio transmission in every event (default).
    #[arg(long, overrides_with = "no_radio")]
    pub radio: bool,
    #[arg(long, overrides_with = "radio")]
    pub no_radio: bool,
}

impl Duty {
    pub fn radio_enabled(&self) -> bool {
        !self.no_radio
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shapes, parameters and MACs of a model.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate and quantize a model to int8, then cross-check the executors.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        /// Float weights container; random weights from `--seed` when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Calibration inputs container; random inputs from `--seed` when absent.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random calibration inputs when `--calib` is absent.
        #[arg(long, default_value_t = 4)]
        calib_count: usize,
        /// Write int8 weights and int32 biases to this container.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Peak memory, tiling and deployability on a device profile.
    Plan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value = "i8", value_parser = parse_precision)]
        precision: Precision,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latency, per-inference energy and battery lifetime.
    Estimate {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_parser = parse_engine)]
        engine: Option<Engine>,
        #[arg(long, default_value = "i8", value_parser = parse_precision)]
        precision: Precision,
        /// Model whose MAC count drives the latency model.
        #[arg(long, conflicts_with = "mmac")]
        model: Option<PathBuf>,
        /// Workload in millions of MACs.
        #[arg(long)]
        mmac: Option<f64>,
        #[command(flatten)]
        duty: Duty,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode raw detector outputs into detections.
    Detect {
        #[arg(long, value_enum)]
        head: Head,
        /// Container with raw outputs, optionally prefixed `<image>/`.
        #[arg(long)]
        raw: PathBuf,
        /// Anchor spec JSON (ssd).
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Model file, for the input size and FOMO stride.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Input image size as `WIDTHxHEIGHT`.
        #[arg(long, value_parser = parse_size)]
        image_size: Option<(usize, usize)>,
        #[arg(long, default_value_t = DEFAULT_IOU_THR)]
        iou_thr: f64,
        #[arg(long, default_value_t = DEFAULT_SCORE_THR)]
        score_thr: f64,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        /// Write detections as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean average precision of detections against ground truth.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THR)]
        iou_thr: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Survey of models x profiles: size, memory, latency, energy, battery.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        model: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        profile: Vec<PathBuf>,
        #[arg(long, num_args = 1.., value_parser = parse_precision, default_values = ["i8", "f16", "f32"])]
        precision: Vec<Precision>,
        #[command(flatten)]
        duty: Duty,
        #[arg(long, requires = "ground_truth")]
        detections: Option<PathBuf>,
        #[arg(long, requires = "detections")]
        ground_truth: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_IOU_THR)]
        iou_thr: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Head {
    Ssd,
    Fomo,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: tinydeploy::planner::PlanError| e.to_string())
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: tinydeploy::perfmodel::PerfError| e.to_string())
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let w = w.parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h = h.parse().map_err(|_| format!("bad height in `{s}`"))?;
    Ok((w, h))
}
