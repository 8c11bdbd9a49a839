use std::path::PathBuf;
use std::process::ExitCode;

use blackstart_milp::BackendKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::Failure;

/// Restoration planning for blacked-out grids.
#[derive(Parser, Debug)]
#[command(name = "blackstart", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an instance file, and optionally a plan file against it.
    Validate {
        instance: PathBuf,
        /// Plan file written by `solve` or `randomized`.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Sequence startups in a single-BS instance.
    Gss {
        instance: PathBuf,
        #[arg(long, default_value_t = 20)]
        horizon: u32,
        /// Sequence the aggregate of all BS curves (a lower bound for
        /// multi-BS instances).
        #[arg(long)]
        aggregate: bool,
        /// Schedule file (JSON); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Partition the grid into islands and sequence each of them.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        /// Largest horizon considered.
        #[arg(long, default_value_t = 64)]
        horizon: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Wall-clock budget for the whole command.
        #[arg(long)]
        deadline_sec: Option<f64>,
        /// Plan file (JSON); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bound log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Independent randomized runs followed by local search.
    Randomized {
        instance: PathBuf,
        #[arg(long, default_value_t = 64)]
        horizon: u32,
        #[arg(long, default_value_t = 32)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Wall-clock budget of each run.
        #[arg(long)]
        deadline_sec: Option<f64>,
        /// Random plans drawn per run before giving up.
        #[arg(long, default_value_t = 100)]
        max_attempts: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Run report (CSV); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Best plan (JSON).
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Build an instance from a MATPOWER case and a parameter template.
    Gen {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        bs_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a bound log into a tidy lower/upper/gap table.
    Report {
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Raise the lower bound one period at a time until the model is feasible.
    Exact,
    /// Lower-bound scan and upper-bound pipeline under one budget.
    Bounds,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Solver backend; `external` runs the program named by BLACKSTART_SOLVER.
    #[arg(long, default_value_t = BackendKind::Reference)]
    backend: BackendKind,
    /// Enforce the instance's critical-load windows.
    #[arg(long)]
    critical_windows: bool,
    /// Cap on |net generation| per island.
    #[arg(long)]
    balance_mw: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
