//! Scenario files.
//!
//! A scenario is JSON. Per-UAV `planner` objects are patches deep-merged over
//! the scenario-level `planner` defaults. Command-line overrides
//! (`dotted.path=value`) are applied to the document with defaults filled in,
//! before validation;
//! a path segment addresses an object key, an array index, or the element of
//! an array of objects whose `id` matches.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::UavState;
use crate::execution::{FollowerConfig, GimbalControllerConfig};
use crate::nlp::SolveOptions;
use crate::ocp::{ConstraintMargins, NoFlyZone, PlannerBounds, PlannerWeights};
use crate::shots::ShotSpec;
use crate::sim::course::TargetMotion;
use crate::{Error, Result, Vec3};

pub const SCHEMA_VERSION: u32 = 1;

fn default_dt() -> f64 {
    0.1
}
fn default_tau() -> f64 {
    0.3
}
fn default_true() -> bool {
    true
}
fn default_failures() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Constant plan bus delivery delay (s).
    #[serde(default)]
    pub bus_delay: f64,
    /// Velocity loop time constant (s).
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Disables the solver time cap and zeroes wall-clock fields in outputs.
    #[serde(default = "default_true")]
    pub deterministic: bool,
    /// Consecutive rejected solves of one UAV that end the run.
    #[serde(default = "default_failures")]
    pub max_consecutive_failures: usize,
    pub target: TargetSpec,
    #[serde(default)]
    pub zones: Vec<NoFlyZone>,
    #[serde(default)]
    pub planner: PlannerConfig,
    pub uavs: Vec<UavSpec>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default)]
    pub position: Vec3,
    pub motion: TargetMotion,
    /// Standard deviation of Gaussian noise on measured target positions (m).
    #[serde(default)]
    pub noise_std: f64,
    /// Planners predict along the course instead of at constant velocity.
    #[serde(default)]
    pub known_course: bool,
    /// When set, the target is a spherical obstacle of this radius.
    #[serde(default)]
    pub obstacle_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Per-solve time cap (s); when absent and the run is not deterministic,
    /// half the planning period is used.
    pub max_wall_time: Option<f64>,
    pub max_iterations: usize,
    pub max_inner_iterations: usize,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            max_wall_time: None,
            max_iterations: d.max_iterations,
            max_inner_iterations: d.max_inner_iterations,
            feasibility_tol: d.feasibility_tol,
            optimality_tol: d.optimality_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Horizon length N (steps).
    pub horizon: usize,
    /// Planner step (s).
    pub dt: f64,
    /// Replanning rate (Hz).
    pub rate: f64,
    pub weights: PlannerWeights,
    pub bounds: PlannerBounds,
    pub margins: ConstraintMargins,
    pub terminal_scale: [f64; 6],
    pub visibility: bool,
    pub solver: SolverConfig,
    pub follower: FollowerConfig,
    pub gimbal: GimbalControllerConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            dt: 0.1,
            rate: 1.0,
            weights: PlannerWeights::default(),
            bounds: PlannerBounds::default(),
            margins: ConstraintMargins::default(),
            terminal_scale: [1.0; 6],
            visibility: true,
            solver: SolverConfig::default(),
            follower: FollowerConfig::default(),
            gimbal: GimbalControllerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpec {
    pub id: String,
    pub priority: u32,
    pub position: Vec3,
    #[serde(default)]
    pub velocity: Vec3,
    pub shots: Vec<ShotSpec>,
    /// Patch over the scenario-level planner configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<Value>,
}

impl UavSpec {
    pub fn initial_state(&self) -> UavState {
        UavState::new(self.position, self.velocity)
    }
}

/// Rejects planning rounds of `uav` from `time` on, `count` times in a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub uav: String,
    pub time: f64,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

/// Per-UAV view with its planner configuration resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedUav {
    pub spec: UavSpec,
    pub planner: PlannerConfig,
}

impl Scenario {
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut scenario: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::Scenario(format!("line {} column {}: {e}", e.line(), e.column())))?;
        if !overrides.is_empty() {
            // overrides act on the document with every default filled in
            let mut raw = serde_json::to_value(&scenario).map_err(|e| Error::Scenario(e.to_string()))?;
            for o in overrides {
                apply_override(&mut raw, o)?;
            }
            scenario = serde_json::from_value(raw).map_err(|e| Error::Scenario(format!("after overrides: {e}")))?;
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text, overrides).map_err(|e| match e {
            Error::Scenario(msg) => Error::Scenario(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Planner configuration of each UAV, sorted by priority.
    pub fn resolved_uavs(&self) -> Result<Vec<ResolvedUav>> {
        let base = serde_json::to_value(&self.planner).map_err(|e| Error::Scenario(e.to_string()))?;
        let mut out = Vec::with_capacity(self.uavs.len());
        for u in &self.uavs {
            let planner = match &u.planner {
                None => self.planner.clone(),
                Some(patch) => {
                    let mut merged = base.clone();
                    merge(&mut merged, patch);
                    serde_json::from_value(merged).map_err(|e| Error::Scenario(format!("uav {} planner: {e}", u.id)))?
                }
            };
            out.push(ResolvedUav {
                spec: u.clone(),
                planner,
            });
        }
        out.sort_by_key(|r| r.spec.priority);
        Ok(out)
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.dt > 0.0) || !(self.duration > 0.0) || !(self.tau > 0.0) {
            return bad("dt, duration and tau must be positive".into());
        }
        if !(self.bus_delay >= 0.0) || !(self.target.noise_std >= 0.0) {
            return bad("bus_delay and noise_std must be nonnegative".into());
        }
        if self.max_consecutive_failures == 0 {
            return bad("max_consecutive_failures must be at least 1".into());
        }
        if self.uavs.is_empty() {
            return bad("scenario has no UAVs".into());
        }
        if let Some(r) = self.target.obstacle_radius {
            if !(r > 0.0) {
                return bad(format!("target obstacle_radius must be positive, got {r}"));
            }
        }
        for z in &self.zones {
            z.validate().map_err(|e| Error::Scenario(e.to_string()))?;
        }
        let mut ids: Vec<&str> = self.uavs.iter().map(|u| u.id.as_str()).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.contains(&"target") {
            return bad("UAV ids must be unique and not 'target'".into());
        }
        let mut prio: Vec<u32> = self.uavs.iter().map(|u| u.priority).collect();
        prio.sort();
        if prio.windows(2).any(|w| w[0] == w[1]) {
            return bad("UAV priorities must be unique".into());
        }
        for r in self.resolved_uavs()? {
            let (u, p) = (&r.spec, &r.planner);
            let ctx = |e: Error| Error::Scenario(format!("uav {}: {e}", u.id));
            p.weights.validate().map_err(ctx)?;
            p.bounds.validate().map_err(ctx)?;
            p.follower.validate().map_err(ctx)?;
            p.gimbal.validate().map_err(ctx)?;
            for s in &u.shots {
                s.validate().map_err(ctx)?;
            }
            if u.shots.is_empty() {
                return bad(format!("uav {} has no shots", u.id));
            }
            if p.horizon == 0 || !(p.dt > 0.0) || !(p.rate > 0.0) {
                return bad(format!("uav {}: horizon, planner dt and rate must be positive", u.id));
            }
            if !divides(self.dt, p.dt) {
                return bad(format!(
                    "uav {}: planner dt {} is not a multiple of the simulation step",
                    u.id, p.dt
                ));
            }
            if !divides(self.dt, 1.0 / p.rate) {
                return bad(format!(
                    "uav {}: planning period {} s is not a multiple of dt",
                    u.id,
                    1.0 / p.rate
                ));
            }
            if !divides(self.dt, 1.0 / p.follower.rate) || !divides(self.dt, 1.0 / p.gimbal.rate) {
                return bad(format!("uav {}: follower/gimbal periods must be multiples of dt", u.id));
            }
            if let Some(t) = p.solver.max_wall_time {
                if !(t > 0.0) {
                    return bad(format!("uav {}: max_wall_time must be positive", u.id));
                }
            }
            if !u.position.iter().chain(u.velocity.iter()).all(|x| x.is_finite()) {
                return bad(format!("uav {}: non-finite initial state", u.id));
            }
        }
        for f in &self.faults {
            if !self.uavs.iter().any(|u| u.id == f.uav) {
                return bad(format!("fault refers to unknown uav {}", f.uav));
            }
        }
        Ok(())
    }
}

/// Whether `period` is a positive integer multiple of `dt`.
fn divides(dt: f64, period: f64) -> bool {
    let r = period / dt;
    r >= 1.0 - 1e-9 && (r - r.round()).abs() < 1e-6
}

/// Deep merge of `patch` into `base`; objects merge key-wise, anything else replaces.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Applies one `dotted.path=value` override. The value is parsed as JSON and
/// falls back to a plain string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Scenario(format!("override '{spec}' is not of the form key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut segments: Vec<&str> = path.split('.').collect();
    if path.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Scenario(format!("override '{spec}' has an empty path segment")));
    }
    // `weights.w2` is shorthand for `planner.weights.w2`
    let is_planner_key =
        root.get(segments[0]).is_none() && root.get("planner").and_then(|p| p.get(segments[0])).is_some();
    if is_planner_key {
        segments.insert(0, "planner");
    }
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx = match seg.parse::<usize>() {
                    Ok(i) => i,
                    Err(_) => items
                        .iter()
                        .position(|it| it.get("id").and_then(Value::as_str) == Some(seg))
                        .ok_or_else(|| Error::Scenario(format!("override '{spec}': no element with id '{seg}'")))?,
                };
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Scenario(format!("override '{spec}': index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Null if !last => {
                *node = Value::Object(Default::default());
                match node {
                    Value::Object(map) => map
                        .entry(seg.to_string())
                        .or_insert_with(|| Value::Object(Default::default())),
                    _ => unreachable!(),
                }
            }
            _ => {
                return Err(Error::Scenario(format!(
                    "override '{spec}': segment '{seg}' does not address an object or array"
                )))
            }
        };
    }
    unreachable!("loop returns on the last segment")
}

impl PlannerConfig {
    /// Solver options for this planner; `deterministic` disables the time cap.
    pub fn solve_options(&self, deterministic: bool) -> SolveOptions {
        let cap = if deterministic {
            None
        } else {
            Some(self.solver.max_wall_time.unwrap_or(0.5 / self.rate))
        };
        SolveOptions {
            max_wall_time: cap.map(std::time::Duration::from_secs_f64),
            max_iterations: self.solver.max_iterations,
            max_inner_iterations: self.solver.max_inner_iterations,
            feasibility_tol: self.solver.feasibility_tol,
            optimality_tol: self.solver.optimality_tol,
            ..Default::default()
        }
    }
}
