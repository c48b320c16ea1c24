//! Metrics over executed trajectories.

use serde::{Deserialize, Serialize};

use crate::dynamics::velocity_yaw;
use crate::ocp::NoFlyZone;
use crate::{wrap_angle, Error, Result, Vec3};

/// One simulation step of one UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavSample {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Follower velocity command.
    pub velocity_cmd: Vec3,
    /// Acceleration of the executed plan segment (zero while hovering).
    pub accel_cmd: Vec3,
    /// World pitch and yaw of the stabilized camera.
    pub gimbal_pitch: f64,
    pub gimbal_yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavTrack {
    pub id: String,
    /// Camera semi-cone angle used for visibility margins.
    pub alpha: f64,
    pub samples: Vec<UavSample>,
}

/// Executed states sampled every `dt`, from time zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutedTrajectories {
    pub dt: f64,
    pub target: Vec<(Vec3, Vec3)>,
    pub uavs: Vec<UavTrack>,
}

impl ExecutedTrajectories {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.dt * i as f64
    }
}

/// Third derivative by three successive central differences; the first one
/// wraps angle increments. Output index `i` corresponds to input `i + 3`.
pub fn angle_jerk(angles: &[f64], dt: f64) -> Result<Vec<f64>> {
    if angles.len() < 7 {
        return Err(Error::MetricsUndefined(format!(
            "{} samples, need at least 7",
            angles.len()
        )));
    }
    let d1: Vec<f64> = angles
        .windows(3)
        .map(|w| wrap_angle(w[2] - w[0]) / (2.0 * dt))
        .collect();
    let d2: Vec<f64> = d1.windows(3).map(|w| (w[2] - w[0]) / (2.0 * dt)).collect();
    Ok(d2.windows(3).map(|w| (w[2] - w[0]) / (2.0 * dt)).collect())
}

fn mean_abs(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64
}

/// Camera pitch `atan2(-ρ, q_z)` and world yaw `atan2(-q_y, -q_x)`.
pub fn camera_angles(q: &Vec3) -> (f64, f64) {
    ((-q.x.hypot(q.y)).atan2(q.z), (-q.y).atan2(-q.x))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub solves: usize,
    pub accepted: usize,
    pub fallbacks: usize,
    /// Steps with an active shot during which the follower had no waypoint.
    pub starved_steps: usize,
    pub avg_solve_time: f64,
    pub max_solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavMetrics {
    pub id: String,
    /// Mean norm of commanded acceleration (m/s²).
    pub avg_accel: f64,
    /// Mean norm of the finite-differenced executed velocity (m/s²).
    pub avg_accel_measured: f64,
    /// Mean |third derivative| of world camera yaw (rad/s³).
    pub avg_yaw_jerk: f64,
    /// Same for the gimbal yaw relative to the heading.
    pub avg_relative_yaw_jerk: f64,
    pub avg_pitch_jerk: f64,
    /// Minimum horizontal distance to each no-fly zone, in zone order (m).
    pub min_zone_distance: Vec<f64>,
    /// Minimum distance to any teammate (m).
    pub min_uav_distance: Option<f64>,
    /// Same, horizontally.
    pub min_uav_horizontal_distance: Option<f64>,
    /// Minimum horizontal distance to the target (m).
    pub min_target_horizontal_distance: f64,
    pub traveled_distance: f64,
    pub solve: SolveStats,
}

/// Visibility of `other` from `camera`: `cos α − cos β`, positive when the
/// other UAV is outside the camera cone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityMargin {
    pub camera: String,
    pub other: String,
    pub min_margin: f64,
    /// Steps with a negative margin.
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub status: String,
    pub simulated_time: f64,
    pub uavs: Vec<UavMetrics>,
    pub visibility: Vec<VisibilityMargin>,
    pub min_pairwise_distance: Option<f64>,
    pub min_pairwise_horizontal_distance: Option<f64>,
}

impl MetricsReport {
    pub fn uav(&self, id: &str) -> Option<&UavMetrics> {
        self.uavs.iter().find(|u| u.id == id)
    }

    pub fn margin(&self, camera: &str, other: &str) -> Option<&VisibilityMargin> {
        self.visibility.iter().find(|v| v.camera == camera && v.other == other)
    }

    /// Clears every wall-clock derived field.
    pub fn zero_wall_clock(&mut self) {
        for u in &mut self.uavs {
            u.solve.avg_solve_time = 0.0;
            u.solve.max_solve_time = 0.0;
        }
    }
}

/// Metrics of executed trajectories. Solve statistics are left at default;
/// the simulation fills them in. Derivative metrics of runs too short to
/// difference (a halt in the first steps) are NaN, written as `null`.
pub fn compute_metrics(exec: &ExecutedTrajectories, zones: &[NoFlyZone]) -> Result<MetricsReport> {
    let n = exec.len();
    if n == 0 {
        return Err(Error::MetricsUndefined("no samples".into()));
    }
    let dt = exec.dt;
    let mut uavs = Vec::with_capacity(exec.uavs.len());
    for (ui, track) in exec.uavs.iter().enumerate() {
        let s = &track.samples;
        let mut pitch = Vec::with_capacity(n);
        let mut yaw = Vec::with_capacity(n);
        let mut rel_yaw = Vec::with_capacity(n);
        let mut heading = 0.0;
        let mut min_target = f64::INFINITY;
        for (k, smp) in s.iter().enumerate() {
            let q = smp.position - exec.target[k].0;
            let (th, ps) = camera_angles(&q);
            if let Ok(h) = velocity_yaw(&smp.velocity) {
                heading = h;
            }
            pitch.push(th);
            yaw.push(ps);
            rel_yaw.push(wrap_angle(ps - heading));
            min_target = min_target.min(q.xy().norm());
        }
        let avg_accel = s.iter().map(|x| x.accel_cmd.norm()).sum::<f64>() / n as f64;
        let avg_accel_measured = if n < 2 {
            f64::NAN
        } else {
            s.windows(2)
                .map(|w| (w[1].velocity - w[0].velocity).norm() / dt)
                .sum::<f64>()
                / (n - 1) as f64
        };
        let jerk = |a: &[f64]| angle_jerk(a, dt).map(|j| mean_abs(&j)).unwrap_or(f64::NAN);
        let min_zone_distance = zones
            .iter()
            .map(|z| {
                s.iter()
                    .map(|x| z.exact_distance(x.position.x, x.position.y))
                    .fold(f64::INFINITY, f64::min)
                    .max(0.0)
            })
            .collect();
        let teammate_min = |dist: fn(&Vec3) -> f64| {
            exec.uavs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != ui)
                .flat_map(|(_, other)| {
                    s.iter()
                        .zip(&other.samples)
                        .map(move |(a, b)| dist(&(a.position - b.position)))
                })
                .reduce(f64::min)
        };
        let min_uav_distance = teammate_min(|d| d.norm());
        let min_uav_horizontal_distance = teammate_min(|d| d.xy().norm());
        let traveled_distance = s.windows(2).map(|w| (w[1].position - w[0].position).norm()).sum();
        uavs.push(UavMetrics {
            id: track.id.clone(),
            avg_accel,
            avg_accel_measured,
            avg_yaw_jerk: jerk(&yaw),
            avg_relative_yaw_jerk: jerk(&rel_yaw),
            avg_pitch_jerk: jerk(&pitch),
            min_zone_distance,
            min_uav_distance,
            min_uav_horizontal_distance,
            min_target_horizontal_distance: min_target,
            traveled_distance,
            solve: SolveStats::default(),
        });
    }
    let mut visibility = Vec::new();
    for cam in &exec.uavs {
        for other in &exec.uavs {
            if cam.id == other.id {
                continue;
            }
            let cos_a = cam.alpha.cos();
            let mut min_margin = f64::INFINITY;
            let mut violations = 0;
            for (k, (a, b)) in cam.samples.iter().zip(&other.samples).enumerate() {
                let q = a.position - exec.target[k].0;
                let d = a.position - b.position;
                if q.norm() < 1e-9 || d.norm() < 1e-9 {
                    continue;
                }
                let margin = cos_a - q.dot(&d) / (q.norm() * d.norm());
                if margin < 0.0 {
                    violations += 1;
                }
                min_margin = min_margin.min(margin);
            }
            visibility.push(VisibilityMargin {
                camera: cam.id.clone(),
                other: other.id.clone(),
                min_margin,
                violations,
            });
        }
    }
    let min_pairwise_distance = uavs.iter().filter_map(|u| u.min_uav_distance).reduce(f64::min);
    let min_pairwise_horizontal_distance = uavs
        .iter()
        .filter_map(|u| u.min_uav_horizontal_distance)
        .reduce(f64::min);
    Ok(MetricsReport {
        name: String::new(),
        status: String::new(),
        simulated_time: dt * (n - 1) as f64,
        uavs,
        visibility,
        min_pairwise_distance,
        min_pairwise_horizontal_distance,
    })
}
