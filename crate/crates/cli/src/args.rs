use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "rotonly",
    version,
    about = "Rotation-only bundle adjustment experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic view graphs.
    Synth(SynthArgs),
    /// Optimize the rotations of a view graph.
    Optimize(OptimizeArgs),
    /// Compare estimated rotations with a graph's ground truth.
    Evaluate(EvaluateArgs),
    /// Generate, perturb, optimize and evaluate many synthetic trials.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Circle,
    PureRotation,
    Mixed,
}

#[derive(Debug, Default, Args)]
pub struct SceneArgs {
    /// Start from a named setting (baseline, planar, pure_rotation, mixed, ...).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Number of cameras.
    #[arg(long)]
    pub n: Option<usize>,
    /// Common points guaranteed for every neighbouring pair.
    #[arg(long)]
    pub n_cov: Option<usize>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Smallest camera-to-point distance.
    #[arg(long)]
    pub d_min: Option<f64>,
    /// Largest camera-to-point distance.
    #[arg(long)]
    pub d_max: Option<f64>,
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,
    /// Camera locations of the mixed layout.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Cameras per location in the mixed layout.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Inlier threshold on the angular reprojection error (radians).
    #[arg(long)]
    pub inlier_threshold: Option<f64>,
    /// Maximum angle (degrees) of the initial-rotation perturbation.
    #[arg(long)]
    pub init_perturb: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct OptimizerArgs {
    /// Number of iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Initial step size.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Use the smallest eigenvalue itself as the edge cost.
    #[arg(long)]
    pub no_sqrt: bool,
    /// Keep the initial step size throughout.
    #[arg(long)]
    pub no_switch: bool,
    /// Perturb both cameras of every edge when differentiating.
    #[arg(long)]
    pub exact_gradient: bool,
    /// Stop early once the relative cost change stays below this value.
    #[arg(long)]
    pub convergence_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// JSON or TOML experiment file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the first trial; trial k uses seed + k - 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of graphs to generate.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Minimum inliers for an edge to be kept.
    #[arg(long)]
    pub min_covisible: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Graph file.
    pub graph: PathBuf,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// JSON or TOML experiment file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Minimum observations per edge accepted when loading.
    #[arg(long)]
    pub min_covisible: Option<usize>,
    /// Add the per-iteration mean L1-aligned error to the trace (needs ground truth).
    #[arg(long)]
    pub track_error: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Rotations file written by `optimize`.
    pub rotations: PathBuf,
    /// Graph file holding the ground truth.
    pub graph: PathBuf,
    /// Minimum observations per edge accepted when loading.
    #[arg(long)]
    pub min_covisible: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// JSON or TOML experiment file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the first trial; trial k uses seed + k - 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Minimum inliers for an edge to be kept.
    #[arg(long)]
    pub min_covisible: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}
