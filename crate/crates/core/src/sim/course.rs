//! Target motion models.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::shots::{CoursePath, KnownCourse, TargetEstimate};
use crate::{Error, Result, Vec3};

/// Gerono lemniscate `x = A sin t, y = A sin t cos t`, resampled to `samples`
/// points uniformly spaced in arc length. The returned course is closed and
/// its first point equals its last.
pub fn eight_path(scale: f64, center: Vec3, samples: usize) -> Result<CoursePath> {
    if !(scale > 0.0) || samples < 8 {
        return Err(Error::InvalidArgument(format!(
            "eight path needs scale > 0 and >= 8 samples, got {scale}/{samples}"
        )));
    }
    let dense = 20 * samples;
    let raw: Vec<Vec3> = (0..=dense)
        .map(|i| {
            let t = TAU * i as f64 / dense as f64;
            center + Vec3::new(scale * t.sin(), scale * t.sin() * t.cos(), 0.0)
        })
        .collect();
    let fine = CoursePath::new(raw, true)?;
    let step = fine.length() / samples as f64;
    let mut points: Vec<Vec3> = (0..samples).map(|i| fine.point_at(step * i as f64)).collect();
    points.push(points[0]);
    CoursePath::new(points, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetMotion {
    /// Constant velocity from the initial position.
    Straight { velocity: Vec3 },
    /// Polyline through `points` at constant speed, starting at the first point.
    Polyline {
        points: Vec<Vec3>,
        speed: f64,
        #[serde(default)]
        closed: bool,
    },
    /// Figure-eight course centred on `center`, starting at the crossing point.
    Eight {
        scale: f64,
        speed: f64,
        #[serde(default)]
        center: Vec3,
    },
}

/// Ground-truth target trajectory.
#[derive(Debug, Clone)]
pub struct TargetTruth {
    start: Vec3,
    velocity: Vec3,
    course: Option<(Arc<CoursePath>, f64)>,
}

impl TargetTruth {
    /// `start` is only used by straight motion; course motions start on the course.
    pub fn new(motion: &TargetMotion, start: Vec3) -> Result<Self> {
        let course = match motion {
            TargetMotion::Straight { velocity } => {
                return Ok(Self {
                    start,
                    velocity: *velocity,
                    course: None,
                })
            }
            TargetMotion::Polyline { points, speed, closed } => (CoursePath::new(points.clone(), *closed)?, *speed),
            TargetMotion::Eight { scale, speed, center } => (eight_path(*scale, *center, 400)?, *speed),
        };
        if !(course.1 >= 0.0 && course.1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "target speed must be >= 0, got {}",
                course.1
            )));
        }
        Ok(Self {
            start: course.0.point_at(0.0),
            velocity: Vec3::zeros(),
            course: Some((Arc::new(course.0), course.1)),
        })
    }

    pub fn course(&self) -> Option<&Arc<CoursePath>> {
        self.course.as_ref().map(|c| &c.0)
    }

    /// Arc length travelled by time `t` (courses only).
    pub fn arc_at(&self, t: f64) -> f64 {
        self.course.as_ref().map_or(0.0, |(_, speed)| speed * t)
    }

    pub fn position(&self, t: f64) -> Vec3 {
        match &self.course {
            None => self.start + self.velocity * t,
            Some((path, speed)) => path.point_at(speed * t),
        }
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        match &self.course {
            None => self.velocity,
            Some((path, speed)) => {
                let s = speed * t;
                if !path.is_closed() && s >= path.length() {
                    Vec3::zeros()
                } else {
                    path.tangent_at(s) * *speed
                }
            }
        }
    }

    /// Tracker estimate from a (possibly noisy) position measurement. With
    /// `known_course` the estimate carries the course for prediction.
    pub fn estimate(&self, t: f64, measured: Vec3, known_course: bool) -> Result<TargetEstimate> {
        let est = TargetEstimate::new(measured, self.velocity(t));
        match (&self.course, known_course) {
            (Some((path, _)), true) => {
                let s = self.arc_at(t);
                let hint = if path.is_closed() {
                    s.rem_euclid(path.length())
                } else {
                    s.min(path.length())
                };
                est.with_course(KnownCourse {
                    path: path.clone(),
                    arc_hint: Some(hint),
                })
            }
            _ => Ok(est),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_extremes_and_closure() {
        let path = eight_path(10.0, Vec3::zeros(), 400).unwrap();
        let pts = path.points();
        assert_eq!(pts.first(), pts.last());
        assert!(pts[0].norm() < 1e-12);
        let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        assert!((max_x - 10.0).abs() < 0.05 && (min_x + 10.0).abs() < 0.05);
    }

    #[test]
    fn eight_length_matches_dense_integration() {
        // independent quadrature of |dγ/dt| = A sqrt(cos²t + cos²2t)
        let a = 10.0;
        let m = 200_000;
        let h = TAU / m as f64;
        let f = |t: f64| a * (t.cos().powi(2) + (2.0 * t).cos().powi(2)).sqrt();
        let mut simpson = f(0.0) + f(TAU);
        for i in 1..m {
            simpson += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let exact = simpson * h / 3.0;
        let path = eight_path(a, Vec3::zeros(), 400).unwrap();
        assert!(
            (path.length() - exact).abs() / exact < 1e-3,
            "{} vs {exact}",
            path.length()
        );
    }

    #[test]
    fn uniform_spacing() {
        let path = eight_path(5.0, Vec3::zeros(), 200).unwrap();
        let gaps: Vec<f64> = path.points().windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let (lo, hi) = gaps
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), g| (l.min(*g), h.max(*g)));
        assert!(hi - lo < 0.01 * hi);
    }

    #[test]
    fn straight_truth() {
        let tr = TargetTruth::new(
            &TargetMotion::Straight { velocity: Vec3::x() },
            Vec3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        assert_eq!(tr.position(2.0), Vec3::new(2.0, 1.0, 0.0));
        assert_eq!(tr.velocity(5.0), Vec3::x());
    }

    #[test]
    fn course_truth_moves_at_speed() {
        let tr = TargetTruth::new(
            &TargetMotion::Eight {
                scale: 10.0,
                speed: 1.5,
                center: Vec3::zeros(),
            },
            Vec3::zeros(),
        )
        .unwrap();
        assert!((tr.velocity(3.0).norm() - 1.5).abs() < 1e-9);
        assert!((tr.position(0.0)).norm() < 1e-12);
        let est = tr.estimate(3.0, tr.position(3.0), true).unwrap();
        assert!(est.course.is_some());
    }
}
