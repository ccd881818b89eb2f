use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "consensus-robustness",
    version,
    about = "Robustness and convergence analysis of discrete-time consensus networks",
    after_help = "Environment:\n  CONSENSUS_ROBUSTNESS_CACHE_MB  memory cap for cached matrix powers, in MiB (default 2048)\n\n\
                  Exit status: 0 success, 1 domain error (JSON error object on stdout), 2 usage error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a network and write it as a matrix file
    Generate(GenerateArgs),
    /// Full single-instance report: validation, pi, stability, Gramian, convergence, bounds
    Analyze(AnalyzeArgs),
    /// Epsilon-convergence time t_A(epsilon)
    Convergence(ConvergenceArgs),
    /// Robustness Gramian of the projected network
    Gramian(GramianArgs),
    /// Scaling sweep over network sizes (CSV)
    Sweep(SweepArgs),
    /// Check the finite-n trace and sigma1 bounds on one instance or over a sweep
    Verify(VerifyArgs),
    /// Propagate a shock through the network
    Simulate(SimulateArgs),
}

/// Where the network comes from: a named family, a descriptor line, or a file.
#[derive(Debug, Clone, Args)]
pub struct Source {
    /// Topology family: star, cycle, path, complete, directed-cycle, flocking,
    /// random-flocking or mixing-example, optionally prefixed with `lazy-`
    #[arg(long, value_name = "NAME")]
    pub family: Option<String>,
    /// Descriptor line, e.g. "kind=cycle n=16 lazy=true"
    #[arg(long, value_name = "LINE")]
    pub descriptor: Option<String>,
    /// Matrix file: a dimension line followed by n rows ('#' starts a comment)
    #[arg(long, value_name = "PATH")]
    pub matrix_file: Option<PathBuf>,
    /// Number of nodes
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge probability for random-flocking
    #[arg(long)]
    pub p: Option<f64>,
    /// Seed for random-flocking graphs
    #[arg(long)]
    pub seed: Option<u64>,
    /// Undirected edge list for flocking, e.g. "0-1,1-2,2-0"
    #[arg(long, value_name = "LIST")]
    pub edges: Option<String>,
    /// Self-loops in flocking graphs
    #[arg(long, value_name = "BOOL", default_value_t = true, action = ArgAction::Set)]
    pub self_loops: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub source: Source,
    /// Matrix file to write (stdout when omitted)
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: Source,
    /// Convergence threshold, in (0, 2)
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// JSON report path (stdout when omitted)
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub source: Source,
    /// Convergence threshold, in (0, 2)
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Write the probed distance curve as CSV (k,distance)
    #[arg(long, value_name = "PATH")]
    pub curve_csv: Option<PathBuf>,
    /// JSON report path (stdout when omitted)
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Direct solve when n is small enough, doubling series otherwise
    Auto,
    /// Linearised solve over the entries of P
    Direct,
    /// Squared-doubling series
    Series,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// M P M^T + I = P
    Controllability,
    /// M^T P M + I = P
    Observability,
    /// P = A^T P A + Q, flocking networks only
    FlockingWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectorArg {
    /// Q = I - 11^T/n
    Uniform,
    /// Q_pi = I - 1 pi^T
    Pi,
}

#[derive(Debug, Args)]
pub struct GramianArgs {
    #[command(flatten)]
    pub source: Source,
    /// Solver: direct linearised solve or doubling series
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
    /// Which Lyapunov equation to solve
    #[arg(long, value_enum, default_value_t = VariantArg::Controllability)]
    pub variant: VariantArg,
    /// Projector applied before solving
    #[arg(long, value_enum, default_value_t = ProjectorArg::Uniform)]
    pub projector: ProjectorArg,
    /// Tail-bound tolerance for the series solver
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    /// Largest n handed to the direct solver
    #[arg(long, default_value_t = 48)]
    pub direct_cap: usize,
    /// JSON report path (stdout when omitted)
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: Source,
    /// Comma-separated, strictly increasing sizes (at least 3)
    #[arg(long, value_delimiter = ',', required = true)]
    pub ns: Vec<usize>,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Sweep CSV path (stdout when omitted)
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Also write n,sigma_ratio plot data to this path
    #[arg(long, value_name = "PATH")]
    pub ratio_plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: Source,
    /// Comma-separated sizes; verifies a whole family instead of one instance
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Worker threads for sweeps
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output path: CSV for sweeps, JSON for single instances (stdout when omitted)
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: Source,
    /// Shock vector, comma separated (default: unit shock on node 0)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "shock_seed")]
    pub omega: Option<Vec<f64>>,
    /// Draw the shock uniformly from [-1, 1]^n with this seed
    #[arg(long)]
    pub shock_seed: Option<u64>,
    /// Steps to simulate (default: 8 t_A(1/2))
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Write k,state_norm,projected_norm as CSV
    #[arg(long, value_name = "PATH")]
    pub curve_csv: Option<PathBuf>,
    /// JSON report path (stdout when omitted)
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}
