//! `fdpsgd`: privacy planning, curves, budget tracking, simulation and
//! self-checks from the command line.
//!
//! Exit codes: 0 ok, 1 self-check failure, 2 usage or input error, 3 budget
//! exceeded, 4 simulation diverged.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_SELFCHECK: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "fdpsgd",
    version,
    about = "f-DP accounting and federated DP-SGD simulation"
)]
struct Cli {
    /// Directory for output files when no explicit path is given.
    #[arg(long, global = true, env = "FDPSGD_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relate (N, m, E, σ) to a privacy guarantee, or pick σ for (ε, δ).
    Plan(PlanArgs),
    /// Write a trade-off curve as `alpha,beta` CSV.
    Curve(CurveArgs),
    /// Append rounds to a ledger file and report the guarantee.
    Account(AccountArgs),
    /// Run a simulation config.
    Simulate(SimulateArgs),
    /// Run the oracle suites.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Training set size.
    #[arg(long = "N")]
    pub n: Option<u64>,
    /// Batch size.
    #[arg(long)]
    pub m: Option<u64>,
    /// Epochs.
    #[arg(long = "E", conflicts_with = "rounds")]
    pub epochs: Option<f64>,
    /// Total rounds (instead of epochs).
    #[arg(long = "T")]
    pub rounds: Option<u64>,
    /// Noise multiplier (forward mode).
    #[arg(long, conflicts_with = "eps")]
    pub sigma: Option<f64>,
    /// Target ε (inverse mode).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    /// JSON output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Epsdelta,
    Subsampled,
    Group,
    Dpsgd,
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Sampling rate.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Group size.
    #[arg(long)]
    pub g: Option<u32>,
    #[arg(long = "N")]
    pub n: Option<u64>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long = "E", conflicts_with = "rounds")]
    pub epochs: Option<f64>,
    #[arg(long = "T")]
    pub rounds: Option<u64>,
    /// Knots for analytic families.
    #[arg(long, default_value_t = 1001)]
    pub knots: usize,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AccountArgs {
    /// Ledger file; created when absent.
    #[arg(long)]
    pub ledger: PathBuf,
    /// Sampling rate of the appended rounds.
    #[arg(long, requires = "sigma")]
    pub p: Option<f64>,
    #[arg(long, requires = "p")]
    pub sigma: Option<f64>,
    /// Number of rounds to append.
    #[arg(long = "T", default_value_t = 1)]
    pub rounds: u64,
    /// Target δ (new ledgers, or to change it).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Budget ε.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Group size.
    #[arg(long, default_value_t = 1)]
    pub g: u32,
    /// Also write the report JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (defaults to the global one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelfcheckArgs {
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
    #[arg(long, hide = true, default_value_t = 0.0, allow_hyphen_values = true)]
    pub perturb_h: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => commands::plan(&a, &cli.out_dir),
        Command::Curve(a) => commands::curve(&a, &cli.out_dir),
        Command::Account(a) => commands::account(&a),
        Command::Simulate(a) => commands::simulate(&a, &cli.out_dir),
        Command::Selfcheck(a) => commands::selfcheck(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<fdpsgd_core::Error>() {
        Some(fdpsgd_core::Error::Diverged { .. }) => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}
