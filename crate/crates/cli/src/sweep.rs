//! Parameter sweeps: one run per value, aggregated into `sweep.csv`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use cineplan::sim::{MetricsReport, Scenario};

use crate::{code, run_scenario, status_code};

/// Environment variable capping the number of concurrent runs.
pub const THREADS_VAR: &str = "CINEPLAN_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Cost weight `w1`..`w4`.
    Weight(u8),
    /// Horizon length in seconds, converted to steps of the planner `dt`.
    HorizonSeconds,
}

impl Axis {
    pub fn parse(name: &str) -> Result<Self, String> {
        match name {
            "w1" | "w2" | "w3" | "w4" => Ok(Axis::Weight(name.as_bytes()[1] - b'0')),
            "horizon" => Ok(Axis::HorizonSeconds),
            other => Err(format!(
                "unknown sweep axis '{other}' (expected w1, w2, w3, w4 or horizon)"
            )),
        }
    }

    /// Override string setting this axis to `value` in `base`.
    fn override_for(self, value: f64, base: &Scenario) -> Result<String, String> {
        match self {
            Axis::Weight(i) => Ok(format!("planner.weights.w{i}={value}")),
            Axis::HorizonSeconds => {
                let steps = (value / base.planner.dt).round();
                if steps < 1.0 {
                    return Err(format!("horizon {value} s is shorter than one planner step"));
                }
                Ok(format!("planner.horizon={steps}"))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Scenario file, relative to the sweep file.
    pub base: PathBuf,
    pub axis: String,
    pub values: Vec<f64>,
    /// Output directory, relative to the working directory.
    pub output: PathBuf,
    /// Overrides applied to every run before the swept value.
    #[serde(default)]
    pub overrides: Vec<String>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut spec: SweepSpec = serde_json::from_str(&text)
            .map_err(|e| format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))?;
        if spec.base.is_relative() {
            spec.base = path.parent().unwrap_or(Path::new(".")).join(&spec.base);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<Axis, String> {
        if self.values.is_empty() {
            return Err("sweep value list is empty".into());
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(format!("sweep value {v} is not finite"));
        }
        Axis::parse(&self.axis)
    }
}

/// Outcome of one child run.
struct Row {
    value: f64,
    code: u8,
    metrics: Option<MetricsReport>,
    error: Option<String>,
}

const UAV_COLUMNS: [&str; 15] = [
    "avg_accel",
    "avg_accel_measured",
    "avg_yaw_jerk",
    "avg_relative_yaw_jerk",
    "avg_pitch_jerk",
    "min_zone_distance",
    "min_uav_distance",
    "min_uav_horizontal_distance",
    "min_target_horizontal_distance",
    "traveled_distance",
    "solves",
    "accepted",
    "fallbacks",
    "starved_steps",
    "avg_solve_time",
];

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn uav_cells(m: &cineplan::sim::UavMetrics) -> Vec<String> {
    let s = &m.solve;
    vec![
        num(m.avg_accel),
        num(m.avg_accel_measured),
        num(m.avg_yaw_jerk),
        num(m.avg_relative_yaw_jerk),
        num(m.avg_pitch_jerk),
        num(m.min_zone_distance.iter().cloned().fold(f64::INFINITY, f64::min)),
        opt(m.min_uav_distance),
        opt(m.min_uav_horizontal_distance),
        num(m.min_target_horizontal_distance),
        num(m.traveled_distance),
        s.solves.to_string(),
        s.accepted.to_string(),
        s.fallbacks.to_string(),
        s.starved_steps.to_string(),
        num(s.avg_solve_time),
    ]
}

/// Writes the aggregate table; UAV columns are prefixed with the UAV id.
fn write_table(path: &Path, axis: &str, uav_ids: &[String], rows: &[Row]) -> Result<(), String> {
    let err = |e: csv::Error| format!("{}: {e}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec![
        axis.to_string(),
        "status".into(),
        "min_pairwise_distance".into(),
        "min_visibility_margin".into(),
    ];
    for id in uav_ids {
        header.extend(UAV_COLUMNS.iter().map(|c| format!("{id}.{c}")));
    }
    header.push("error".into());
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![format!("{}", r.value)];
        match &r.metrics {
            Some(m) => {
                rec.push(m.status.clone());
                rec.push(opt(m.min_pairwise_distance));
                rec.push(opt(m.visibility.iter().map(|v| v.min_margin).reduce(f64::min)));
                for id in uav_ids {
                    match m.uav(id) {
                        Some(u) => rec.extend(uav_cells(u)),
                        None => rec.extend(std::iter::repeat_n(String::new(), UAV_COLUMNS.len())),
                    }
                }
            }
            None => {
                rec.push("error".into());
                rec.extend(std::iter::repeat_n(
                    String::new(),
                    2 + UAV_COLUMNS.len() * uav_ids.len(),
                ));
            }
        }
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| format!("{}: {e}", path.display()))
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_VAR)
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|n| *n > 0)
}

fn run_all(spec: &SweepSpec, axis: Axis, base: &Scenario) -> Vec<Row> {
    let one = |&value: &f64| {
        let dir = spec.output.join(format!("{}_{value}", spec.axis));
        let result = axis.override_for(value, base).and_then(|o| {
            let mut overrides = spec.overrides.clone();
            overrides.push(o);
            run_scenario(&spec.base, &overrides, &dir)
        });
        match result {
            Ok(out) => Row {
                value,
                code: status_code(out.status),
                error: out.halt_reason.clone(),
                metrics: Some(out.metrics),
            },
            Err(e) => Row {
                value,
                code: code::MALFORMED,
                metrics: None,
                error: Some(e),
            },
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| spec.values.par_iter().map(one).collect()),
        Err(_) => spec.values.iter().map(one).collect(),
    }
}

pub fn cmd_sweep(path: &Path) -> u8 {
    let spec = match SweepSpec::load(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return code::MALFORMED;
        }
    };
    let axis = spec.validate().expect("validated on load");
    let base = match Scenario::load(&spec.base, &spec.overrides) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return code::MALFORMED;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&spec.output) {
        eprintln!("error: {}: {e}", spec.output.display());
        return code::MALFORMED;
    }
    let rows = run_all(&spec, axis, &base);
    let mut uav_ids: Vec<String> = Vec::new();
    for r in &rows {
        for u in r.metrics.iter().flat_map(|m| &m.uavs) {
            if !uav_ids.contains(&u.id) {
                uav_ids.push(u.id.clone());
            }
        }
    }
    let table = spec.output.join("sweep.csv");
    if let Err(e) = write_table(&table, &spec.axis, &uav_ids, &rows) {
        eprintln!("error: {e}");
        return code::MALFORMED;
    }
    for r in &rows {
        let status = r.metrics.as_ref().map(|m| m.status.as_str()).unwrap_or("error");
        println!("{} = {}: {status}", spec.axis, r.value);
        if let Some(e) = &r.error {
            eprintln!("  {e}");
        }
    }
    println!("wrote {}", table.display());
    rows.iter().map(|r| r.code).find(|c| *c != code::OK).unwrap_or(code::OK)
}
