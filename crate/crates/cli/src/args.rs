//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ccmlb", version, about = "CCM load balancing simulator and MILP toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Phase specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Compute coefficient, 0 or 1.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Off-rank communication coefficient, seconds per byte.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// On-rank communication coefficient, seconds per byte.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Homing coefficient, seconds per byte.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Charge infinite work to ranks over their memory share.
    #[arg(long)]
    pub enforce_memory: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BalanceArgs {
    /// Balancing iterations.
    #[arg(long, default_value_t = 8)]
    pub iters: usize,
    /// Gossip rounds per iteration.
    #[arg(long, default_value_t = 2)]
    pub rounds: usize,
    /// Peers contacted per gossip message.
    #[arg(long, default_value_t = 4)]
    pub fanout: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Minimum edge volume that ties two tasks into one cluster.
    #[arg(long, default_value_t = 0)]
    pub comm_threshold: u64,
    /// Log every gossip message in the trace.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Comcp,
    Fwmp,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the balancer and write stats.json and trace.log.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        lb: BalanceArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the MILP in LP format with a JSON metadata sidecar.
    ExportMilp {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = KindArg::Fwmp)]
        kind: KindArg,
        /// LP file to write; metadata goes to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Enumerate every assignment for the optimum.
    SolveExact {
        #[command(flatten)]
        model: ModelArgs,
        /// Largest number of assignments to enumerate.
        #[arg(long, default_value_t = 10_000_000)]
        limit: u128,
        /// Skip rank relabelings when all ranks are interchangeable.
        #[arg(long)]
        symmetry: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare repeated balancer runs against the exact optimum.
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        lb: BalanceArgs,
        /// Balancer runs, seeded consecutively from --seed.
        #[arg(long, default_value_t = 12)]
        repeats: u64,
        /// Homing coefficients to sweep instead of --delta.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 10_000_000)]
        limit: u128,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Off-home block counts of the balancer across homing coefficients.
    SweepDelta {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        lb: BalanceArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1e-12, 1e-11, 1e-10, 1e-9])]
        deltas: Vec<f64>,
        /// Seeds, consecutive from --seed.
        #[arg(long, default_value_t = 1)]
        repeats: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce a sample table by duration histogram.
    Datared {
        /// CSV with header; last column is the duration.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        /// Rows to keep.
        #[arg(long)]
        target: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reduced CSV; the removal log goes to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Under-penalized RMSE of predictions against truths.
    Loss {
        /// CSV with columns prediction,truth.
        #[arg(long)]
        input: PathBuf,
        /// Weight of under-predictions.
        #[arg(long, default_value_t = 1.0)]
        penalty: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the Boolean and integer linking relations for assignments.
    VerifyTheorems {
        #[arg(long)]
        spec: PathBuf,
        /// Comma-separated rank per task; defaults to the initial assignment.
        #[arg(long, value_delimiter = ',')]
        assignment: Vec<usize>,
        /// Check every assignment instead.
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 100_000)]
        limit: u128,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
