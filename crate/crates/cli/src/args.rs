use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use swingid::estimators::EstimatorKind;
use swingid::fixture::TEN_GENERATOR_SEED;
use swingid::io::SweepVariable;

#[derive(Debug, Parser)]
#[command(
    name = "swingid",
    version,
    about = "Swing-dynamics simulation and state-matrix identification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trajectory file per seed.
    Simulate(SimulateArgs),
    /// Estimate the dynamic state matrix from a trajectory file.
    Estimate(EstimateArgs),
    /// Run an estimation sweep over stride or observation window.
    Sweep(SweepArgs),
    /// Eigenvalue table of an estimate and/or a model.
    Eigen(EigenArgs),
    /// High-probability error bounds by Monte Carlo.
    Bound(BoundArgs),
    /// Kron-reduced Laplacian of a model.
    Kron(KronArgs),
    /// Write a random geometric test network.
    Fixture(FixtureArgs),
}

/// Generation settings. Without `--config` the model, window and seeds
/// must all be given as flags; with it, flags override the file.
#[derive(Debug, Args)]
pub struct GenerationArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Simulation step in seconds [default: 1/60].
    #[arg(long)]
    pub dt_base: Option<f64>,
    /// Observation window in seconds.
    #[arg(long)]
    pub t_obs: Option<f64>,
    /// Burn-in steps [default: twice the slowest time constant].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Seed; repeat for several. Replaces the configured seed list.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Use seeds 1..=N. Replaces the configured seed list.
    #[arg(long, conflicts_with = "seeds")]
    pub n_seeds: Option<u64>,
}

/// Estimation settings; flags override the `[estimation]` section.
#[derive(Debug, Args)]
pub struct EstimationArgs {
    /// Keep every k-th sample.
    #[arg(long)]
    pub stride: Option<usize>,
    /// uml, cml, lasso, slr (sparse_low_rank) or tikhonov; repeat for
    /// several. Replaces the configured estimator list.
    #[arg(long = "estimator")]
    pub estimators: Vec<EstimatorKind>,
    /// LASSO and sparse-plus-low-rank sparsity weight. Penalties scale the
    /// unnormalized sum over transitions, so retune them when T changes.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sparse-plus-low-rank nuclear-norm weight.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Tikhonov weight.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Tikhonov prior: matrix file with a previous one-step estimate.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Zero the off-diagonal entries of the lower-right block.
    #[arg(long)]
    pub threshold: bool,
    /// Also estimate the noise scale from the residuals.
    #[arg(long)]
    pub estimate_b: bool,
    /// Fall back to a pseudo-inverse when the sample covariance is singular.
    #[arg(long)]
    pub pseudo_inverse: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// Output directory [default: the config's `outputs`, else `.`].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Trajectory file (`t,delta_*,omega_*`).
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Experiment config; supplies the estimation section and the truth model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground-truth model; enables the relative error.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// Output directory [default: the config's `outputs`, else `.`].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// Sweep axis.
    #[arg(long, value_parser = parse_variable)]
    pub variable: Option<SweepVariable>,
    /// Axis values, comma separated. For `stride` defaults to
    /// 1,2,3,4,5,6,10,15,20,30.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Output directory [default: the config's `outputs`, else `.`].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    /// Estimated continuous-time matrix file.
    #[arg(long, required_unless_present = "model")]
    pub estimate: Option<PathBuf>,
    /// Ground-truth model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Eigenvalues at most this large in modulus count as the zero mode
    /// [default: 1e-6 times the spectral radius].
    #[arg(long)]
    pub zero_tol: Option<f64>,
    /// Eigenvalue table path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// Sampling stride; the bound is evaluated at Δt = stride·dt_base.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Failure probability.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Monte Carlo trials for the expectations.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Report path (TOML) [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KronArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Matrix file path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = TEN_GENERATOR_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub generators: usize,
    #[arg(long, default_value_t = 4)]
    pub loads: usize,
    /// Model file path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_variable(s: &str) -> Result<SweepVariable, String> {
    match s {
        "stride" => Ok(SweepVariable::Stride),
        "t_obs" | "t-obs" => Ok(SweepVariable::TObs),
        other => Err(format!("expected stride or t_obs, got '{other}'")),
    }
}
