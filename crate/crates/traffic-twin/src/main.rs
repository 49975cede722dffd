use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use traffic_twin::cli::{self, Overrides};
use traffic_twin::manager::ManagerMode;

/// Deterministic desk-scale traffic digital twin.
#[derive(Parser)]
#[command(name = "traffic-twin", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Optimized,
    FifoBaseline,
}

impl From<ModeArg> for ManagerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Optimized => ManagerMode::Optimized,
            ModeArg::FifoBaseline => ManagerMode::FifoBaseline,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv, events.jsonl, metrics.json.
    Run {
        /// Scenario JSON (defaults apply when omitted).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the manager mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        quiet: bool,
    },
    /// Load a map file and check every structural invariant.
    ValidateMap {
        /// Map JSON file.
        map: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Run optimized and FIFO-baseline managers on the same seed.
    Compare {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Directory for compare.json (report prints to stdout regardless).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Sweep channel latencies and report vehicle response delays.
    Lag {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Latency in seconds; repeatable.
        #[arg(long = "latency", required = true)]
        latencies: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() {
    let args = Args::parse();
    let result = match args.command {
        Command::Run {
            scenario,
            out,
            seed,
            mode,
            quiet,
        } => cli::cmd_run(
            scenario.as_deref(),
            &out,
            &Overrides {
                seed,
                mode: mode.map(Into::into),
                quiet,
            },
        ),
        Command::ValidateMap { map, quiet } => cli::cmd_validate_map(&map, quiet),
        Command::Compare {
            scenario,
            out,
            seed,
            quiet,
        } => cli::cmd_compare(
            scenario.as_deref(),
            out.as_deref(),
            &Overrides {
                seed,
                mode: None,
                quiet,
            },
        ),
        Command::Lag {
            scenario,
            latencies,
            out,
            seed,
            quiet,
        } => cli::cmd_lag(
            scenario.as_deref(),
            &latencies,
            out.as_deref(),
            &Overrides {
                seed,
                mode: None,
                quiet,
            },
        ),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
