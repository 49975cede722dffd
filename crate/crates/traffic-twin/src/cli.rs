//! Implementations behind the `traffic-twin` binary: scenario runs, map
//! validation, paired mode comparison, and the latency sweep.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 internal
//! invariant breach. Text reports are stable-ordered and line-oriented so
//! they diff cleanly.

use crate::engine::{self, Metrics, SimConfig};
use crate::error::Error;
use crate::manager::ManagerMode;
use crate::scenario;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::Map(_)
            | Error::Json(_) => 2,
            Error::Io(_) => 3,
            _ => 4,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult = Result<(), CliError>;

/// Seed/mode overrides applied on top of the scenario file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<ManagerMode>,
    pub quiet: bool,
}

fn load(scenario: Option<&Path>, overrides: &Overrides) -> Result<SimConfig, CliError> {
    let mut cfg = match scenario {
        Some(path) => {
            if !path.exists() {
                return Err(CliError {
                    code: 3,
                    message: format!("scenario file not found: {}", path.display()),
                });
            }
            scenario::load_scenario(path)?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = overrides.mode {
        cfg.mode = mode;
    }
    Ok(cfg)
}

/// Execute a scenario and write trace.csv, events.jsonl, and metrics.json
/// into `out`.
pub fn cmd_run(scenario: Option<&Path>, out: &Path, overrides: &Overrides) -> CliResult {
    let cfg = load(scenario, overrides)?;
    let result = engine::run(&cfg, Some(out))?;
    engine::write_metrics(&result.metrics, out)?;
    if !overrides.quiet {
        println!("{}", summary_text(&result.metrics));
        println!("wrote {}", out.join("metrics.json").display());
    }
    Ok(())
}

/// Load a map file, check every structural invariant, and print a summary.
pub fn cmd_validate_map(map: &Path, quiet: bool) -> CliResult {
    let graph = crate::map::load_map_raw(map)?;
    let diags = graph.validate();
    if !quiet {
        let (min, max) = graph.bounding_box();
        println!("nodes: {}", graph.nodes().len());
        println!("edges: {}", graph.edges().len());
        println!("spacing_m: {}", graph.spacing());
        println!(
            "bbox: ({:.2}, {:.2}) .. ({:.2}, {:.2})",
            min.x, min.y, max.x, max.y
        );
        println!("strongly_connected: {}", graph.strongly_connected());
        println!("has_cycle: {}", graph.has_cycle());
    }
    if diags.is_empty() {
        if !quiet {
            println!("map is valid");
        }
        Ok(())
    } else {
        for d in &diags {
            eprintln!("invalid: {d}");
        }
        Err(CliError {
            code: 2,
            message: format!("{} invariant violation(s)", diags.len()),
        })
    }
}

#[derive(Serialize)]
struct CompareReport {
    optimized: Metrics,
    fifo_baseline: Metrics,
}

/// Run the optimized manager and the FIFO baseline on the same seed and
/// emit a side-by-side report (text to stdout, JSON to `out` if given).
pub fn cmd_compare(
    scenario: Option<&Path>,
    out: Option<&Path>,
    overrides: &Overrides,
) -> CliResult {
    let base = load(scenario, overrides)?;
    let mut optimized_cfg = base.clone();
    optimized_cfg.mode = ManagerMode::Optimized;
    let mut fifo_cfg = base;
    fifo_cfg.mode = ManagerMode::FifoBaseline;

    let optimized = engine::run(&optimized_cfg, None)?.metrics;
    let fifo = engine::run(&fifo_cfg, None)?.metrics;

    if !overrides.quiet {
        println!("{}", compare_text(&optimized, &fifo));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError {
            code: 3,
            message: e.to_string(),
        })?;
        let report = CompareReport {
            optimized,
            fifo_baseline: fifo,
        };
        let mut json = serde_json::to_string_pretty(&report).expect("report serialize");
        json.push('\n');
        std::fs::write(dir.join("compare.json"), json).map_err(|e| CliError {
            code: 3,
            message: e.to_string(),
        })?;
    }
    Ok(())
}

/// Latency sweep: one run per latency, same seed, reporting vehicle response
/// delay and the trace-wide minimum separation.
pub fn cmd_lag(
    scenario: Option<&Path>,
    latencies: &[f64],
    out: Option<&Path>,
    overrides: &Overrides,
) -> CliResult {
    if latencies.is_empty() {
        return Err(CliError {
            code: 2,
            message: "lag needs at least one --latency value".into(),
        });
    }
    if let Some(bad) = latencies.iter().find(|&&l| l < 0.0) {
        return Err(CliError {
            code: 2,
            message: format!("latency must be >= 0, got {bad}"),
        });
    }
    let cfg = load(scenario, overrides)?;
    let rows = engine::lag_experiment(&cfg, latencies)?;

    if !overrides.quiet {
        println!("latency_s  mean_response_delay_s  min_separation_m");
        for row in &rows {
            let sep = row
                .min_separation
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "-".into());
            println!(
                "{:<9.3}  {:<21.4}  {sep}",
                row.latency, row.mean_response_delay
            );
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError {
            code: 3,
            message: e.to_string(),
        })?;
        let mut json = serde_json::to_string_pretty(&rows).expect("rows serialize");
        json.push('\n');
        std::fs::write(dir.join("lag.json"), json).map_err(|e| CliError {
            code: 3,
            message: e.to_string(),
        })?;
    }
    Ok(())
}

fn summary_text(m: &Metrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "completed_routes: {}", m.completed_routes);
    let _ = writeln!(s, "throughput_per_min: {:.3}", m.throughput);
    let _ = writeln!(
        s,
        "min_separation_m: {}",
        m.min_separation
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into())
    );
    let _ = writeln!(s, "separation_violations: {}", m.separation_violations);
    let _ = writeln!(s, "deadlock_events: {}", m.deadlock_events);
    let _ = write!(s, "mean_speed_mps: {:.3}", m.mean_speed);
    s
}

fn compare_text(optimized: &Metrics, fifo: &Metrics) -> String {
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let sep = |m: &Metrics| {
        m.min_separation
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into())
    };
    let mut s = String::new();
    let _ = writeln!(s, "metric                optimized  fifo_baseline");
    let _ = writeln!(
        s,
        "throughput_per_min    {:<9.3}  {:<9.3}",
        optimized.throughput, fifo.throughput
    );
    let _ = writeln!(
        s,
        "mean_travel_time_s    {:<9.3}  {:<9.3}",
        mean(&optimized.travel_times),
        mean(&fifo.travel_times)
    );
    let _ = writeln!(
        s,
        "deadlock_events       {:<9}  {:<9}",
        optimized.deadlock_events, fifo.deadlock_events
    );
    let _ = write!(
        s,
        "min_separation_m      {:<9}  {:<9}",
        sep(optimized),
        sep(fifo)
    );
    s
}
