use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pomdp_aa::eval::InitialBelief;
use pomdp_aa::{Mode, OperatorSpec};

#[derive(Debug, Parser)]
#[command(
    name = "pomdp-aa",
    version,
    about = "Offline POMDP solvers with safeguarded Anderson acceleration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a model and write report.json (and optionally alpha.csv).
    Solve(SolveArgs),
    /// Roll out the greedy policy of an alpha.csv and write eval.json.
    Eval(EvalArgs),
    /// Run an operator x mode x safeguard matrix and write a CSV table.
    Bench(BenchArgs),
    /// Re-run a solve from its report.json and compare the residual history.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OperatorName {
    Qmdp,
    Sqmdp,
    Fib,
    Sfib,
    Kqmdp,
    Kfib,
}

impl OperatorName {
    pub fn spec(self, tau: f64) -> OperatorSpec {
        match self {
            OperatorName::Qmdp => OperatorSpec::qmdp(),
            OperatorName::Sqmdp => OperatorSpec::soft_qmdp(tau),
            OperatorName::Fib => OperatorSpec::fib(),
            OperatorName::Sfib => OperatorSpec::soft_fib(tau),
            OperatorName::Kqmdp => OperatorSpec::kl_qmdp(tau),
            OperatorName::Kfib => OperatorSpec::kl_fib(tau),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeName {
    Fpi,
    Aa,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Mode {
        match m {
            ModeName::Fpi => Mode::Fpi,
            ModeName::Aa => Mode::Aa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BeliefName {
    Default,
    Uniform,
    Random,
}

impl From<BeliefName> for InitialBelief {
    fn from(b: BeliefName) -> InitialBelief {
        match b {
            BeliefName::Default => InitialBelief::Default,
            BeliefName::Uniform => InitialBelief::Uniform,
            BeliefName::Random => InitialBelief::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

/// Hyperparameters shared by `solve` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Temperature of the regularized operators.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub tau: f64,
    /// AA memory size M.
    #[arg(long = "mem", default_value_t = 16)]
    pub mem: usize,
    #[arg(long, default_value_t = 1e-16, allow_negative_numbers = true)]
    pub eta: f64,
    /// Residual safeguard constant D.
    #[arg(long = "big-d", default_value_t = 1e6, allow_negative_numbers = true)]
    pub big_d: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub phi: f64,
    /// Residual safeguard period N_s.
    #[arg(long = "ns", default_value_t = 400)]
    pub ns: usize,
    /// Slope m of the target acceleration factor.
    #[arg(long = "m", default_value_t = 1.0, allow_negative_numbers = true)]
    pub m: f64,
    /// Intercept m̄ of the target acceleration factor.
    #[arg(long = "mbar", default_value_t = 1.0, allow_negative_numbers = true)]
    pub mbar: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub kappa: f64,
    #[arg(long = "tol", default_value_t = 1e-6, allow_negative_numbers = true)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = OperatorName::Sqmdp)]
    pub operator: OperatorName,
    #[arg(long, value_enum, default_value_t = ModeName::Aa)]
    pub mode: ModeName,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for report.json and alpha.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write alpha.csv.
    #[arg(long = "emit-alpha")]
    pub emit_alpha: bool,
    /// Also write residuals.csv (iteration, residual) for plotting.
    #[arg(long = "emit-plot-data")]
    pub emit_plot_data: bool,
    /// Use the sampled operator with J draws per (state, action).
    #[arg(long = "simulate", value_name = "J")]
    pub simulate: Option<usize>,
    /// With --simulate, draw one sample batch and reuse it every iteration.
    #[arg(long = "frozen-batch")]
    pub frozen_batch: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RolloutFlags {
    #[arg(long, default_value_t = 100)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 100)]
    pub horizon: usize,
    /// Accumulate discounted instead of plain reward.
    #[arg(long)]
    pub discounted: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub alpha: PathBuf,
    #[command(flatten)]
    pub rollout: RolloutFlags,
    /// Initial belief used for reward_fixed.
    #[arg(long, value_enum, default_value_t = BeliefName::Default)]
    pub belief: BeliefName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// One or more model files.
    #[arg(long = "model", required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[arg(long = "operator", value_enum, value_delimiter = ',', default_values_t = [OperatorName::Sqmdp])]
    pub operators: Vec<OperatorName>,
    #[arg(long = "mode", value_enum, value_delimiter = ',', default_values_t = [ModeName::Fpi, ModeName::Aa])]
    pub modes: Vec<ModeName>,
    /// Target-acceleration-factor safeguard settings for AA cells.
    #[arg(long = "safeguard", value_enum, value_delimiter = ',', default_values_t = [Switch::On])]
    pub safeguard: Vec<Switch>,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub rollout: RolloutFlags,
    /// Number of seeds per cell.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// First seed; cells use seed, seed + 1, ...
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV file.
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Model file to use instead of the path recorded in the manifest.
    #[arg(long)]
    pub model: Option<PathBuf>,
}
