//! Shot semantics and target motion prediction.
//!
//! A shot places the UAV relative to the target in the target's heading frame
//! (forward = direction of motion, left = forward rotated +90° about z). The
//! desired state is evaluated at the end of the planning horizon, or at the
//! shot end when that comes first.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Target speeds below this (m/s) keep the last valid heading.
pub const HEADING_SPEED_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

fn default_orbit_azimuth() -> f64 {
    PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShotKind {
    Chase {
        distance: f64,
    },
    Lead {
        distance: f64,
    },
    Lateral {
        distance: f64,
        side: Side,
    },
    Flyby {
        /// Distance behind the target at the start of the shot.
        behind: f64,
        /// Distance ahead of the target at the end of the shot.
        ahead: f64,
    },
    Orbit {
        radius: f64,
        /// Azimuth in the heading frame at shot start (π = behind).
        #[serde(default = "default_orbit_azimuth")]
        start_azimuth: f64,
    },
}

impl ShotKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShotKind::Chase { .. } => "chase",
            ShotKind::Lead { .. } => "lead",
            ShotKind::Lateral { .. } => "lateral",
            ShotKind::Flyby { .. } => "flyby",
            ShotKind::Orbit { .. } => "orbit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotSpec {
    #[serde(flatten)]
    pub kind: ShotKind,
    #[serde(default)]
    pub start_time: f64,
    pub duration: f64,
    pub altitude: f64,
}

impl ShotSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.duration > 0.0) {
            return bad(format!("shot duration must be > 0, got {}", self.duration));
        }
        if !(self.altitude > 0.0) {
            return bad(format!("shot altitude must be > 0, got {}", self.altitude));
        }
        let distances: &[f64] = match &self.kind {
            ShotKind::Chase { distance } | ShotKind::Lead { distance } | ShotKind::Lateral { distance, .. } => {
                &[*distance]
            }
            ShotKind::Flyby { behind, ahead } => &[*behind, *ahead],
            ShotKind::Orbit { radius, .. } => &[*radius],
        };
        if distances.iter().any(|d| !(*d > 0.0)) {
            return bad(format!("{} shot distances must be > 0", self.kind.name()));
        }
        if !self.start_time.is_finite() || self.start_time < 0.0 {
            return bad(format!("shot start_time must be >= 0, got {}", self.start_time));
        }
        Ok(())
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    /// Shots whose relative distance to the target is constant.
    pub fn is_constant_distance(&self) -> bool {
        matches!(
            self.kind,
            ShotKind::Chase { .. } | ShotKind::Lead { .. } | ShotKind::Lateral { .. }
        )
    }
}

/// Polyline course; closed courses wrap arc length modulo the total length.
#[derive(Debug, Clone, PartialEq)]
pub struct CoursePath {
    points: Vec<Vec3>,
    cumulative: Vec<f64>,
    closed: bool,
}

impl CoursePath {
    pub fn new(points: Vec<Vec3>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument("course needs at least two points".into()));
        }
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite("course point"));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            s += (w[1] - w[0]).norm();
            cumulative.push(s);
        }
        if !(s > 0.0) {
            return Err(Error::InvalidArgument("course has zero length".into()));
        }
        Ok(Self {
            points,
            cumulative,
            closed,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn normalize_arc(&self, s: f64) -> f64 {
        if self.closed {
            s.rem_euclid(self.length())
        } else {
            s.clamp(0.0, self.length())
        }
    }

    fn segment_index(&self, s: f64) -> usize {
        match self.cumulative.partition_point(|&c| c <= s) {
            0 => 0,
            i => (i - 1).min(self.points.len() - 2),
        }
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        let s = self.normalize_arc(s);
        let i = self.segment_index(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let len = self.cumulative[i + 1] - self.cumulative[i];
        if len <= 0.0 {
            return a;
        }
        a + (b - a) * ((s - self.cumulative[i]) / len)
    }

    pub fn tangent_at(&self, s: f64) -> Vec3 {
        let s = self.normalize_arc(s);
        let mut i = self.segment_index(s);
        // skip zero-length segments
        while i + 2 < self.points.len() && (self.points[i + 1] - self.points[i]).norm() == 0.0 {
            i += 1;
        }
        let d = self.points[i + 1] - self.points[i];
        let n = d.norm();
        if n > 0.0 {
            d / n
        } else {
            Vec3::zeros()
        }
    }

    /// Arc length of the closest point. With a hint, only segments within
    /// ±`window` of the hint are searched (needed where the course crosses itself).
    pub fn project(&self, p: &Vec3, hint: Option<f64>, window: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.points.len() - 1 {
            let (s0, s1) = (self.cumulative[i], self.cumulative[i + 1]);
            if let Some(h) = hint {
                if !self.arc_interval_near(s0, s1, h, window) {
                    continue;
                }
            }
            let (a, b) = (self.points[i], self.points[i + 1]);
            let ab = b - a;
            let l2 = ab.norm_squared();
            let t = if l2 > 0.0 {
                ((p - a).dot(&ab) / l2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = (a + ab * t - p).norm();
            if d < best.0 {
                best = (d, s0 + t * (s1 - s0));
            }
        }
        if best.0.is_infinite() {
            // hint window missed every segment
            return self.project(p, None, window);
        }
        (best.1, best.0)
    }

    fn arc_interval_near(&self, s0: f64, s1: f64, h: f64, window: f64) -> bool {
        let dist = |s: f64| {
            let d = (s - h).abs();
            if self.closed {
                d.min(self.length() - d)
            } else {
                d
            }
        };
        let inside = if s0 <= h && h <= s1 {
            0.0
        } else {
            dist(s0).min(dist(s1))
        };
        inside <= window
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownCourse {
    pub path: Arc<CoursePath>,
    /// Current arc-length position, when the tracker knows it.
    pub arc_hint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetEstimate {
    pub position: Vec3,
    pub velocity: Vec3,
    pub course: Option<KnownCourse>,
    /// Heading used while the target is (nearly) stationary.
    pub fallback_heading: f64,
}

impl TargetEstimate {
    pub fn new(position: Vec3, velocity: Vec3) -> Self {
        let heading = if velocity.xy().norm() >= HEADING_SPEED_THRESHOLD {
            velocity.y.atan2(velocity.x)
        } else {
            0.0
        };
        Self {
            position,
            velocity,
            course: None,
            fallback_heading: heading,
        }
    }

    /// Attaches a known course; the target must lie within 1 m of it.
    pub fn with_course(mut self, course: KnownCourse) -> Result<Self> {
        let (_, dist) = course.path.project(&self.position, course.arc_hint, 2.0);
        if dist > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "target is {dist:.3} m away from its known course"
            )));
        }
        self.course = Some(course);
        Ok(self)
    }

    pub fn with_fallback_heading(mut self, heading: f64) -> Self {
        self.fallback_heading = heading;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSample {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Predicted target states at `k·dt`, k = 0..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPrediction {
    pub dt: f64,
    pub samples: Vec<TargetSample>,
    pub fallback_heading: f64,
}

impl TargetPrediction {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample at a time offset from the first sample; linear between samples,
    /// constant-velocity beyond the last one.
    pub fn at(&self, offset: f64) -> TargetSample {
        let last = self.samples.len() - 1;
        let x = (offset / self.dt).max(0.0);
        if x >= last as f64 {
            let s = self.samples[last];
            let extra = offset - last as f64 * self.dt;
            return TargetSample {
                position: s.position + s.velocity * extra.max(0.0),
                velocity: s.velocity,
            };
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        TargetSample {
            position: a.position.lerp(&b.position, f),
            velocity: a.velocity.lerp(&b.velocity, f),
        }
    }

    pub fn heading_at(&self, offset: f64) -> f64 {
        let v = self.at(offset).velocity;
        if v.xy().norm() >= HEADING_SPEED_THRESHOLD {
            v.y.atan2(v.x)
        } else {
            self.fallback_heading
        }
    }
}

/// Constant-velocity extrapolation, or arc-length advance along a known course
/// at the current speed.
pub fn predict_target(est: &TargetEstimate, horizon_steps: usize, dt: f64) -> TargetPrediction {
    let n = horizon_steps.max(1);
    let samples = match &est.course {
        None => (0..=n)
            .map(|k| TargetSample {
                position: est.position + est.velocity * (k as f64 * dt),
                velocity: est.velocity,
            })
            .collect(),
        Some(course) => {
            let path = &course.path;
            let (s0, _) = path.project(&est.position, course.arc_hint, 2.0);
            let speed = est.velocity.norm();
            let direction = if est.velocity.dot(&path.tangent_at(s0)) < 0.0 {
                -1.0
            } else {
                1.0
            };
            (0..=n)
                .map(|k| {
                    let s = s0 + direction * speed * k as f64 * dt;
                    TargetSample {
                        position: path.point_at(s),
                        velocity: path.tangent_at(s) * (direction * speed),
                    }
                })
                .collect()
        }
    };
    TargetPrediction {
        dt,
        samples,
        fallback_heading: est.fallback_heading,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredState {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Shot offset and its time derivative in the heading frame (forward, left).
fn shot_offset(kind: &ShotKind, t: f64, duration: f64) -> ([f64; 2], [f64; 2]) {
    match *kind {
        ShotKind::Chase { distance } => ([-distance, 0.0], [0.0, 0.0]),
        ShotKind::Lead { distance } => ([distance, 0.0], [0.0, 0.0]),
        ShotKind::Lateral { distance, side } => ([0.0, side.sign() * distance], [0.0, 0.0]),
        ShotKind::Flyby { behind, ahead } => {
            let progress = (t / duration).clamp(0.0, 1.0);
            let span = behind + ahead;
            ([-behind + span * progress, 0.0], [span / duration, 0.0])
        }
        ShotKind::Orbit { radius, start_azimuth } => {
            let rate = TAU / duration;
            let az = start_azimuth + rate * t;
            let (s, c) = az.sin_cos();
            ([radius * c, radius * s], [-radius * rate * s, radius * rate * c])
        }
    }
}

/// Desired UAV state for a shot `shot_elapsed` seconds in, looking `horizon`
/// seconds ahead. `prediction` starts at the current time.
pub fn desired_state(
    shot: &ShotSpec,
    prediction: &TargetPrediction,
    shot_elapsed: f64,
    horizon: f64,
) -> Result<DesiredState> {
    if shot_elapsed < 0.0 || !shot_elapsed.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "shot elapsed time {shot_elapsed} is negative"
        )));
    }
    if shot_elapsed > shot.duration + 1e-9 {
        return Err(Error::ShotComplete {
            elapsed: shot_elapsed,
            duration: shot.duration,
        });
    }
    let query = (shot_elapsed + horizon.max(0.0)).min(shot.duration);
    let ahead = (query - shot_elapsed).max(0.0);
    let sample = prediction.at(ahead);
    let heading = prediction.heading_at(ahead);
    let (sh, ch) = heading.sin_cos();
    let fwd = Vec3::new(ch, sh, 0.0);
    let left = Vec3::new(-sh, ch, 0.0);
    let (off, rate) = shot_offset(&shot.kind, query, shot.duration);
    let mut position = sample.position + fwd * off[0] + left * off[1];
    position.z = shot.altitude;
    let mut velocity = sample.velocity + fwd * rate[0] + left * rate[1];
    velocity.z = 0.0;
    Ok(DesiredState { position, velocity })
}
