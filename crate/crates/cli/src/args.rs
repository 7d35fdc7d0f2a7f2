use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coldcharge::controller::ThetaMode;
use coldcharge::harness::Method;
use coldcharge::thermal::TruthModel;

#[derive(Debug, Parser)]
#[command(name = "coldcharge", version, about = "EV charging and battery heating control for cold climates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method on one scenario; writes metrics.json, trace.jsonl and trajectories.csv.
    Run(RunArgs),
    /// Run all five methods on one scenario; writes compare.csv and compare.json.
    Compare(CommonArgs),
    /// Sweep V, gamma or the ambient offset; writes sweep.csv.
    Sweep(SweepArgs),
    /// Run the self-check suite and, with --scenario, validate a scenario file.
    Validate(ValidateArgs),
    /// Write a synthetic scenario (a directory of CSV files, or JSON if --out ends in .json).
    Generate(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TruthArg {
    Queue,
    Exact,
}

impl From<TruthArg> for TruthModel {
    fn from(t: TruthArg) -> Self {
        match t {
            TruthArg::Queue => TruthModel::Queue,
            TruthArg::Exact => TruthModel::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThetaArg {
    Theorem,
    Permissive,
}

impl From<ThetaArg> for ThetaMode {
    fn from(t: ThetaArg) -> Self {
        match t {
            ThetaArg::Theorem => ThetaMode::Theorem,
            ThetaArg::Permissive => ThetaMode::Permissive,
        }
    }
}

/// Options shared by every subcommand that needs a scenario. Flags override
/// values from `--config`.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario JSON file or directory with ambient.csv, price.csv, pv.csv and sessions.csv.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub truth_model: Option<TruthArg>,
    #[arg(long, value_enum)]
    pub theta_mode: Option<ThetaArg>,
    /// Uniform ambient shift in °C.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    /// Seed for the synthetic scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    /// EVs per day for the synthetic scenario.
    #[arg(long)]
    pub ev_count: Option<usize>,
    /// Days in the synthetic scenario.
    #[arg(long)]
    pub days: Option<usize>,
    /// Output directory (or file for `generate`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    V,
    Gamma,
    Offset,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated grid; defaults to 100..600 for V, 5,10,20,40 for gamma
    /// and -12..4 in steps of 2 for the offset.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Vec<f64>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub method: Vec<Method>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Also validate this scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random per-slot instances for the solver checks.
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    /// Write the check results as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}
