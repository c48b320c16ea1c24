//! `cineplan` command-line interface.

mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cineplan::sim::{output::write_outputs, run, RunStatus, Scenario, SimOutput};
use cineplan::validation;

/// Exit codes shared by every subcommand.
pub mod code {
    pub const OK: u8 = 0;
    pub const MALFORMED: u8 = 1;
    pub const SAFETY: u8 = 2;
    pub const SOLVER: u8 = 3;
}

#[derive(Parser)]
#[command(name = "cineplan", version, about = "Multi-UAV cinematography planner and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trajectories.csv, metrics.json and events.csv.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
        /// Override a scenario value, e.g. `planner.weights.w2=1000`.
        #[arg(long = "set", value_name = "K=V")]
        overrides: Vec<String>,
    },
    /// Run a scenario once per value of a parameter and tabulate the metrics.
    Sweep { spec: PathBuf },
    /// Run the embedded validation suite.
    Check {
        /// Random sample points per check.
        #[arg(long, default_value_t = validation::DEFAULT_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

pub fn status_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Completed => code::OK,
        RunStatus::SafetyViolation => code::SAFETY,
        RunStatus::SolverFailure => code::SOLVER,
    }
}

/// Loads, simulates and writes one scenario. Errors are returned as
/// printable diagnostics.
pub fn run_scenario(path: &Path, overrides: &[String], out_dir: &Path) -> Result<SimOutput, String> {
    let scenario = Scenario::load(path, overrides).map_err(|e| e.to_string())?;
    let output = run(&scenario).map_err(|e| format!("{}: {e}", path.display()))?;
    write_outputs(&output, out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;
    Ok(output)
}

fn print_summary(output: &SimOutput) {
    let m = &output.metrics;
    println!("{}: {} after {:.1} s", m.name, m.status, m.simulated_time);
    if let Some(reason) = &output.halt_reason {
        println!("  halted: {reason}");
    }
    for u in &m.uavs {
        let zone = u.min_zone_distance.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "  {}: acc {:.3} m/s2, yaw jerk {:.3}, pitch jerk {:.3} rad/s3, zone clearance {}, solves {}/{} accepted",
            u.id,
            u.avg_accel,
            u.avg_yaw_jerk,
            u.avg_pitch_jerk,
            if zone.is_finite() {
                format!("{zone:.2} m")
            } else {
                "-".into()
            },
            u.solve.accepted,
            u.solve.solves,
        );
    }
    if let Some(d) = m.min_pairwise_distance {
        println!("  min pairwise distance {d:.2} m");
    }
}

fn cmd_run(path: &Path, out_dir: &Path, overrides: &[String]) -> u8 {
    match run_scenario(path, overrides, out_dir) {
        Ok(output) => {
            print_summary(&output);
            status_code(output.status)
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            code::MALFORMED
        }
    }
}

fn cmd_check(points: usize, seed: u64) -> u8 {
    let results = validation::run_all(points, seed);
    print!("{}", validation::format_table(&results));
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        code::OK
    } else {
        code::MALFORMED
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run {
            scenario,
            output,
            overrides,
        } => cmd_run(&scenario, &output, &overrides),
        Command::Sweep { spec } => sweep::cmd_sweep(&spec),
        Command::Check { points, seed } => cmd_check(points, seed),
    };
    ExitCode::from(status)
}
