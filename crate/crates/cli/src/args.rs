use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use shallowc::shadows::ShadowMode;
use shallowc::verify::Thresholds;

#[derive(Debug, Parser)]
#[command(name = "shallowc", version, about = "Compress circuits by learning shallow local inversions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", content = "options", rename_all = "kebab-case")]
pub enum Command {
    /// Recursively cut, learn and verify a circuit, then write the assembled result.
    Compress(Opts),
    /// Learn and sew local inversions for the whole circuit.
    Lil(Opts),
    /// Compare a candidate (sewn circuit, compressed program or circuit) against the input.
    Verify(Opts),
    /// Run the input on one stabilizer product state and report the output state.
    Simulate(Opts),
    /// Generate a randomized-measurement dataset for the input circuit.
    GenShadows(Opts),
}

impl Command {
    pub fn opts(&self) -> &Opts {
        match self {
            Command::Compress(o)
            | Command::Lil(o)
            | Command::Verify(o)
            | Command::Simulate(o)
            | Command::GenShadows(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Half,
    Theta,
    Window,
    Partition,
}

/// Every knob of the pipeline; each subcommand reads the ones it uses.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Opts {
    /// Input circuit file.
    #[arg(long)]
    pub input: PathBuf,
    /// Main output file; defaults to a path derived from the input.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON report path; defaults to a path derived from the input.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Candidate file for `verify`.
    #[arg(long)]
    pub candidate: Option<PathBuf>,
    /// Gate set used to parse the input, e.g. `clifford+t` or `clifford`.
    #[arg(long)]
    pub gate_set: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Sample count for learning (sampled mode) and dataset generation.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Inputs for sampled verification.
    #[arg(long)]
    pub verify_samples: Option<usize>,
    /// Maximum inversion depth.
    #[arg(long, default_value_t = 3)]
    pub d_inv: usize,
    /// Maximum Pauli weight of learned terms.
    #[arg(long, default_value_t = 4)]
    pub k_max: usize,
    /// `p/q` for `theta`, comma-separated weights for `partition`.
    /// Given alone, it selects `theta`.
    #[arg(long)]
    pub cut_ratio: Option<String>,
    #[arg(long, value_enum, default_value_t = StrategyKind::Half)]
    pub cut_strategy: StrategyKind,
    /// Nodes at most this deep are kept without a learning attempt.
    #[arg(long, default_value_t = 1)]
    pub stop_depth: usize,
    /// `exact` or `sampled`.
    #[arg(long, default_value_t = ShadowMode::Exact)]
    pub mode: ShadowMode,
    /// `theorem10` (ε/12n) or `algorithm1` (ε/12).
    #[arg(long, default_value_t = Thresholds::PerQubit)]
    pub thresholds: Thresholds,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Input state for `simulate`, one code per qubit from `01+-rl`.
    #[arg(long)]
    pub state: Option<String>,
}
