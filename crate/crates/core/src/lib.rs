//! # cineplan
//!
//! Online trajectory planning for teams of camera UAVs filming a moving target.
//!
//! Each UAV solves a receding-horizon optimal control problem over a
//! double-integrator model, trading off acceleration effort, gimbal angular
//! rates and a shot-specific terminal state, subject to velocity/acceleration
//! bounds, no-fly zones, inter-UAV collision avoidance, gimbal mechanical limits
//! and mutual camera visibility. UAVs coordinate through a fixed priority order
//! and a simulated plan bus; plans are executed by a pure-pursuit follower while
//! an SO(3) controller keeps the gimbal pointed at the target.
//!
//! ## Modules
//!
//! - [`dynamics`]: frames, double-integrator model, attitude/thrust recovery
//! - [`gimbal`]: camera angles from relative geometry and their rates
//! - [`shots`]: shot semantics and target motion prediction
//! - [`ocp`]: multiple-shooting transcription of the planning problem
//! - [`nlp`]: augmented Lagrangian NLP solver
//! - [`coordination`]: priority planning rounds and the plan bus
//! - [`execution`]: trajectory follower and gimbal controller
//! - [`sim`]: deterministic world simulation, scenarios and metrics
//! - [`validation`]: embedded self-check suite

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coordination;
pub mod dynamics;
pub mod error;
pub mod execution;
pub mod gimbal;
pub mod nlp;
pub mod ocp;
pub mod shots;
pub mod sim;
pub mod validation;

pub use error::{Error, Result};

/// 3D vector in the world ENU frame.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Rotation matrix.
pub type Rot3 = nalgebra::Rotation3<f64>;

/// Wraps an angle to the half-open interval (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(3.5) - (3.5 - 2.0 * PI)).abs() < 1e-15);
        assert_eq!(wrap_angle(0.0), 0.0);
    }
}
