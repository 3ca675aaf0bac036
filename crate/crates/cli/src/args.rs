use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use occlusim::{AccumParams, EventCameraParams, SceneConfig};

/// Sequences per dataset at desk scale and at the published dataset size.
pub const DEFAULT_SEQUENCES: usize = 24;
pub const PAPER_SCALE_SEQUENCES: usize = 480;

#[derive(Debug, Parser)]
#[command(name = "occlusim", version, about = "Simulate dynamic occlusions seen by an event camera and reconstruct the hidden background")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset of occluded sequences.
    Generate(GenerateArgs),
    /// Reconstruct the background of every sequence by event accumulation.
    Reconstruct(ReconstructArgs),
    /// Score reconstructions against ground truth, stratified by coverage.
    Evaluate(EvaluateArgs),
    /// Metrics as a function of coverage, written as CSV and an SVG plot.
    Sweep(SweepArgs),
    /// Render event representations and frames of one sequence as images.
    Preview(PreviewArgs),
}

/// Target coverage: a fixed fraction, or the six deciles 10..60% in turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coverage {
    Mixed,
    Fixed(f64),
}

pub const COVERAGE_DECILES: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];

impl Coverage {
    pub fn for_index(self, index: usize) -> f64 {
        match self {
            Coverage::Mixed => COVERAGE_DECILES[index % COVERAGE_DECILES.len()],
            Coverage::Fixed(c) => c,
        }
    }
}

fn parse_coverage(s: &str) -> Result<Coverage, String> {
    if s.eq_ignore_ascii_case("mixed") {
        return Ok(Coverage::Mixed);
    }
    let v: f64 = s.parse().map_err(|_| format!("expected a fraction or \"mixed\", got {s:?}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("coverage {v} is not a fraction in [0, 1]"));
    }
    Ok(Coverage::Fixed(v))
}

#[derive(Debug, Clone, Args)]
pub struct RootArg {
    /// Dataset root directory.
    #[arg(long, env = "OCCLUSIM_ROOT")]
    pub root: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 384)]
    pub height: usize,
    /// Sequence length in seconds.
    #[arg(long, default_value_t = 0.1)]
    pub duration: f64,
    #[arg(long, default_value_t = 4.0)]
    pub radius_min: f64,
    #[arg(long, default_value_t = 16.0)]
    pub radius_max: f64,
    #[arg(long, default_value_t = 0.065)]
    pub intensity_min: f64,
    #[arg(long, default_value_t = 0.075)]
    pub intensity_max: f64,
    /// Particle speed range in pixels per second.
    #[arg(long, default_value_t = 300.0)]
    pub speed_min: f64,
    #[arg(long, default_value_t = 1500.0)]
    pub speed_max: f64,
}

impl SceneArgs {
    pub fn config(&self, target_coverage: f64) -> SceneConfig {
        SceneConfig {
            width: self.width,
            height: self.height,
            duration: self.duration,
            target_coverage,
            radius_range: (self.radius_min, self.radius_max),
            intensity_range: (self.intensity_min, self.intensity_max),
            speed_range: (self.speed_min, self.speed_max),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    #[arg(long, default_value_t = 0.15)]
    pub contrast_threshold: f64,
    /// Standard deviation of the per-crossing threshold noise; 0 is noiseless.
    #[arg(long, default_value_t = 0.0)]
    pub threshold_jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub refractory_us: u64,
    /// Internal rendering rate in frames per second.
    #[arg(long, default_value_t = 5000.0)]
    pub render_rate: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub log_eps: f64,
}

impl CameraArgs {
    pub fn params(&self) -> EventCameraParams {
        EventCameraParams {
            contrast_threshold: self.contrast_threshold,
            log_eps: self.log_eps,
            threshold_jitter_sigma: self.threshold_jitter,
            refractory_us: self.refractory_us,
            render_rate: self.render_rate,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AccumArgs {
    /// Inject the ground-truth mask instead of the similar-intensity segmentation.
    #[arg(long)]
    pub use_gt_mask: bool,
    /// Log-domain occluder similarity band [default: 2 x contrast threshold].
    #[arg(long)]
    pub similarity_eps: Option<f64>,
    /// Shortest level run counted as background dwell, in microseconds.
    #[arg(long, default_value_t = 2000)]
    pub quiet_period_us: u64,
}

impl AccumArgs {
    pub fn params(&self, contrast_threshold: f64, log_eps: f64) -> AccumParams {
        let mut p = AccumParams::for_threshold(contrast_threshold);
        if let Some(eps) = self.similarity_eps {
            p.occluder_similarity_eps = eps;
        }
        p.quiet_period_min_us = self.quiet_period_us;
        p.log_eps = log_eps;
        p
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub root: RootArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of sequences [default: 24].
    #[arg(long, conflicts_with = "paper_scale")]
    pub sequences: Option<usize>,
    /// Generate the full-size dataset of 480 sequences.
    #[arg(long)]
    pub paper_scale: bool,
    /// Target coverage fraction, or "mixed" to cycle through 10..60%.
    #[arg(long, default_value = "mixed", value_parser = parse_coverage)]
    pub coverage: Coverage,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Number of event representations per sequence.
    #[arg(long, default_value_t = occlusim::repr::DEFAULT_N_REPR)]
    pub n_repr: usize,
    /// Representation interval in microseconds [default: span / n-repr].
    #[arg(long)]
    pub tau_us: Option<u64>,
    /// Worker threads [default: available cores, at most 4].
    #[arg(long)]
    pub workers: Option<usize>,
}

impl GenerateArgs {
    pub fn sequence_count(&self) -> usize {
        if self.paper_scale {
            PAPER_SCALE_SEQUENCES
        } else {
            self.sequences.unwrap_or(DEFAULT_SEQUENCES)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub root: RootArg,
    /// Contrast threshold assumed for integration [default: the generator's].
    #[arg(long)]
    pub contrast_threshold: Option<f64>,
    #[command(flatten)]
    pub accum: AccumArgs,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub root: RootArg,
    /// Directory for the report files [default: the dataset root].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Directory receiving sweep.csv and sweep.svg.
    #[command(flatten)]
    pub root: RootArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sequences per coverage decile.
    #[arg(long, default_value_t = 4)]
    pub sequences: usize,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[command(flatten)]
    pub accum: AccumArgs,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub root: RootArg,
    /// Sequence directory name [default: the first sequence].
    #[arg(long)]
    pub seq: Option<String>,
    /// Event count at which preview colors saturate.
    #[arg(long, default_value_t = 4)]
    pub max_count: u32,
}
