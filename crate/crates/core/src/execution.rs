//! Trajectory following and gimbal stabilization.

use serde::{Deserialize, Serialize};

use crate::coordination::PlannedTrajectory;
use crate::gimbal::{camera_rotation, RelativePosition};
use crate::{Error, Result, Rot3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowerConfig {
    /// Minimum arc length between the closest waypoint and the pursued one (m).
    pub look_ahead: f64,
    /// Command rate (Hz).
    pub rate: f64,
}

impl Default for FollowerConfig {
    fn default() -> Self {
        Self {
            look_ahead: 1.0,
            rate: 10.0,
        }
    }
}

impl FollowerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.look_ahead > 0.0 && self.look_ahead.is_finite()) || !(self.rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "follower needs look_ahead > 0 and rate > 0, got {} / {}",
                self.look_ahead, self.rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowCommand {
    pub velocity: Vec3,
    /// The plan has no waypoints left at or after the current time.
    pub exhausted: bool,
    pub closest: usize,
    pub pursued: usize,
}

/// Pure-pursuit follower over a time-stamped plan.
#[derive(Debug, Clone)]
pub struct TrajectoryFollower {
    cfg: FollowerConfig,
    v_min: Vec3,
    v_max: Vec3,
    plan: Option<PlannedTrajectory>,
    closest: usize,
    pursued: usize,
}

impl TrajectoryFollower {
    /// Commands are clamped to the box `[v_min, v_max]`.
    pub fn new(cfg: FollowerConfig, v_min: Vec3, v_max: Vec3) -> Result<Self> {
        cfg.validate()?;
        if (0..3).any(|i| !(v_min[i] < 0.0 && v_max[i] > 0.0)) {
            return Err(Error::InvalidArgument("follower velocity box must contain zero".into()));
        }
        Ok(Self {
            cfg,
            v_min,
            v_max,
            plan: None,
            closest: 0,
            pursued: 0,
        })
    }

    pub fn plan(&self) -> Option<&PlannedTrajectory> {
        self.plan.as_ref()
    }

    /// Replaces the reference; indices restart at the new plan's first waypoint.
    pub fn set_plan(&mut self, plan: PlannedTrajectory) {
        self.plan = Some(plan);
        self.closest = 0;
        self.pursued = 0;
    }

    pub fn clear(&mut self) {
        self.plan = None;
    }

    pub fn command(&mut self, p_now: &Vec3, t_now: f64) -> FollowCommand {
        let idle = FollowCommand {
            velocity: Vec3::zeros(),
            exhausted: true,
            closest: self.closest,
            pursued: self.pursued,
        };
        let Some(plan) = &self.plan else {
            return idle;
        };
        let n = plan.states.len() - 1;
        let eps = 1e-9;
        if t_now > plan.end_time() + eps {
            return idle;
        }
        // waypoints stamped before now are never executed
        let first = (((t_now - plan.stamp_start) / plan.dt - eps).ceil().max(0.0) as usize).min(n);
        let start = first.max(self.closest);
        let mut closest = start;
        let mut best = f64::INFINITY;
        for k in start..=n {
            let d = (plan.states[k].position - p_now).norm_squared();
            if d < best {
                best = d;
                closest = k;
            }
        }
        let mut pursued = closest;
        let mut arc = 0.0;
        while pursued < n && arc < self.cfg.look_ahead {
            arc += (plan.states[pursued + 1].position - plan.states[pursued].position).norm();
            pursued += 1;
        }
        let pursued = pursued.max(self.pursued).min(n);
        self.closest = closest;
        self.pursued = pursued;

        let delta = plan.states[pursued].position - p_now;
        let dist = delta.norm();
        // a command is held for one control period, so the waypoint cannot be
        // reached any sooner than that
        let remaining = (plan.time_of(pursued) - t_now).max(1.0 / self.cfg.rate);
        let velocity = if dist < 1e-12 { Vec3::zeros() } else { delta / remaining };
        FollowCommand {
            velocity: self.clamp(velocity),
            exhausted: false,
            closest,
            pursued,
        }
    }

    /// Largest speed along unit direction `dir` that stays inside the box.
    fn max_speed_along(&self, dir: &Vec3) -> f64 {
        (0..3)
            .filter(|&i| dir[i] != 0.0)
            .map(|i| {
                if dir[i] > 0.0 {
                    self.v_max[i] / dir[i]
                } else {
                    self.v_min[i] / dir[i]
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Scales the command down uniformly so that direction is preserved.
    fn clamp(&self, v: Vec3) -> Vec3 {
        let speed = v.norm();
        if speed == 0.0 {
            return v;
        }
        let limit = self.max_speed_along(&(v / speed));
        if speed > limit {
            v * (limit / speed)
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GimbalControllerConfig {
    /// Proportional gain (1/s).
    pub k_omega: f64,
    /// Control rate (Hz).
    pub rate: f64,
}

impl Default for GimbalControllerConfig {
    fn default() -> Self {
        Self {
            k_omega: 2.0,
            rate: 10.0,
        }
    }
}

impl GimbalControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_omega > 0.0 && self.k_omega.is_finite()) || !(self.rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gimbal controller needs k_omega > 0 and rate > 0, got {} / {}",
                self.k_omega, self.rate
            )));
        }
        Ok(())
    }
}

/// Vector of a skew-symmetric matrix.
pub fn vee(m: &nalgebra::Matrix3<f64>) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Body-frame angular rate `k_ω (R_e − R_eᵀ)^∨` with `R_e = R_Cᵀ R_C*`,
/// where `R_C*` points the camera from `p_q` at `p_t`.
pub fn gimbal_command(r_current: &Rot3, p_q: &Vec3, p_t: &Vec3, cfg: &GimbalControllerConfig) -> Result<Vec3> {
    let q = RelativePosition::from_positions(p_q, p_t)?;
    let r_des = camera_rotation(&q);
    let r_e = r_current.matrix().transpose() * r_des.matrix();
    Ok(cfg.k_omega * vee(&(r_e - r_e.transpose())))
}

/// Geodesic angle between two rotations.
pub fn rotation_error_angle(a: &Rot3, b: &Rot3) -> f64 {
    // atan2 form stays accurate for small angles, unlike acos of the trace
    let r = a.matrix().transpose() * b.matrix();
    let s = vee(&(r - r.transpose())).norm() / 2.0;
    let c = (r.trace() - 1.0) / 2.0;
    s.atan2(c)
}

/// Gimbal orientation integrated from commanded body rates.
#[derive(Debug, Clone)]
pub struct GimbalController {
    cfg: GimbalControllerConfig,
    rotation: Rot3,
    last_command: Vec3,
    held: bool,
}

impl GimbalController {
    pub fn new(cfg: GimbalControllerConfig, initial: Rot3) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            rotation: initial,
            last_command: Vec3::zeros(),
            held: false,
        })
    }

    pub fn rotation(&self) -> &Rot3 {
        &self.rotation
    }

    pub fn last_command(&self) -> Vec3 {
        self.last_command
    }

    /// Whether the last step held the previous command on singular geometry.
    pub fn held(&self) -> bool {
        self.held
    }

    /// Computes a command and integrates it over `dt`.
    pub fn step(&mut self, p_q: &Vec3, p_t: &Vec3, dt: f64) -> Vec3 {
        match gimbal_command(&self.rotation, p_q, p_t, &self.cfg) {
            Ok(w) => {
                self.last_command = w;
                self.held = false;
            }
            Err(_) => self.held = true,
        }
        let w = self.last_command;
        self.rotation = Rot3::from_matrix(&(self.rotation * Rot3::new(w * dt)).into_inner());
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ControlInput, UavState};
    use std::f64::consts::FRAC_PI_2;

    fn box_follower(l: f64) -> TrajectoryFollower {
        TrajectoryFollower::new(
            FollowerConfig {
                look_ahead: l,
                rate: 10.0,
            },
            Vec3::repeat(-10.0),
            Vec3::repeat(10.0),
        )
        .unwrap()
    }

    fn straight(v: Vec3, n: usize) -> PlannedTrajectory {
        PlannedTrajectory::from_controls(
            "a",
            0.0,
            0.1,
            UavState::new(Vec3::new(0.0, 0.0, 3.0), v),
            vec![ControlInput::zero(); n],
        )
        .unwrap()
    }

    #[test]
    fn on_path_command_equals_plan_velocity() {
        let v = Vec3::new(2.0, 1.0, 0.0);
        let plan = straight(v, 50);
        let mut f = box_follower(1.0);
        f.set_plan(plan.clone());
        for t in [0.0, 0.3, 0.35, 1.27, 2.0] {
            let c = f.command(&plan.position_at(t), t);
            assert!((c.velocity - v).norm() < 1e-9, "t={t}: {:?}", c.velocity);
            assert!(!c.exhausted);
        }
    }

    #[test]
    fn lateral_offset_steers_back() {
        let plan = straight(Vec3::new(2.0, 0.0, 0.0), 50);
        let mut f = box_follower(1.0);
        f.set_plan(plan.clone());
        let c = f.command(&(plan.position_at(1.0) + Vec3::new(0.0, 1.0, 0.0)), 1.0);
        assert!(c.velocity.y < 0.0);
    }

    #[test]
    fn past_end_is_exhausted() {
        let mut f = box_follower(1.0);
        f.set_plan(straight(Vec3::x(), 10));
        let c = f.command(&Vec3::zeros(), 1.5);
        assert!(c.exhausted);
        assert_eq!(c.velocity, Vec3::zeros());
        let mut none = box_follower(1.0);
        assert!(none.command(&Vec3::zeros(), 0.0).exhausted);
    }

    #[test]
    fn command_is_clamped_preserving_direction() {
        let mut f = TrajectoryFollower::new(FollowerConfig::default(), Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        f.set_plan(straight(Vec3::new(3.0, 1.5, 0.0), 20));
        let c = f.command(&Vec3::new(0.0, 0.0, 3.0), 0.0);
        assert!((c.velocity.x - 1.0).abs() < 1e-12);
        assert!((c.velocity.y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pursued_index_is_monotone() {
        // a U-turn brings late waypoints close to early positions
        let x0 = UavState::new(Vec3::new(0.0, 0.0, 3.0), Vec3::new(2.0, 0.0, 0.0));
        let controls = vec![ControlInput::new(Vec3::new(-1.0, 0.2, 0.0)); 60];
        let plan = PlannedTrajectory::from_controls("a", 0.0, 0.1, x0, controls).unwrap();
        let mut f = box_follower(1.0);
        f.set_plan(plan.clone());
        let mut last = 0;
        for i in 0..60 {
            let t = i as f64 * 0.1;
            let wobble = Vec3::new(0.3 * (i as f64).sin(), 0.2, 0.0);
            let c = f.command(&(plan.position_at(t) + wobble), t);
            assert!(c.pursued >= last);
            last = c.pursued;
        }
    }

    #[test]
    fn replacing_with_coinciding_plan_is_seamless() {
        let v = Vec3::new(1.0, 0.5, 0.0);
        let old = straight(v, 40);
        let t = 1.0;
        let mut f = box_follower(1.0);
        f.set_plan(old.clone());
        let p = old.position_at(t) + Vec3::new(0.1, -0.2, 0.0);
        let mut g = f.clone();
        let before = f.command(&p, t);
        // new plan starting at the switch instant along the same line
        let mut controls = vec![ControlInput::zero(); 30];
        controls[25] = ControlInput::new(Vec3::new(1.0, 0.0, 0.0));
        let new = PlannedTrajectory::from_controls("a", t, 0.1, old.state_at(t), controls).unwrap();
        g.set_plan(new);
        let after = g.command(&p, t);
        assert!((before.velocity - after.velocity).norm() < 1e-9);
    }

    #[test]
    fn aligned_gimbal_has_zero_rate() {
        let (pq, pt) = (Vec3::new(5.0, 2.0, 4.0), Vec3::new(0.0, 0.0, 0.0));
        let r = camera_rotation(&RelativePosition::from_positions(&pq, &pt).unwrap());
        let w = gimbal_command(&r, &pq, &pt, &GimbalControllerConfig::default()).unwrap();
        assert!(w.norm() < 1e-12);
    }

    #[test]
    fn yaw_error_rate_closed_form() {
        let (pq, pt) = (Vec3::new(5.0, 2.0, 4.0), Vec3::zeros());
        let r_des = camera_rotation(&RelativePosition::from_positions(&pq, &pt).unwrap());
        // R_e = R_Cᵀ R_C* = Rz(0.2)  ⇒  R_C = R_C* Rz(−0.2)
        let r = r_des * Rot3::from_axis_angle(&Vec3::z_axis(), -0.2);
        let cfg = GimbalControllerConfig {
            k_omega: 1.5,
            rate: 10.0,
        };
        let w = gimbal_command(&r, &pq, &pt, &cfg).unwrap();
        let expected = 2.0 * 0.2f64.sin() * cfg.k_omega;
        assert!((w - Vec3::new(0.0, 0.0, expected)).norm() < 1e-12);
        assert!((2.0 * 0.2f64.sin() - 0.39734).abs() < 1e-5);
    }

    #[test]
    fn closed_loop_error_decreases() {
        let (pq, pt) = (Vec3::new(-3.0, 4.0, 6.0), Vec3::zeros());
        let r_des = camera_rotation(&RelativePosition::from_positions(&pq, &pt).unwrap());
        let axis = nalgebra::Unit::new_normalize(Vec3::new(1.0, -2.0, 0.5));
        let cfg = GimbalControllerConfig {
            k_omega: 2.0,
            rate: 100.0,
        };
        let mut g = GimbalController::new(cfg, r_des * Rot3::from_axis_angle(&axis, 0.5)).unwrap();
        let mut prev = rotation_error_angle(g.rotation(), &r_des);
        for _ in 0..500 {
            g.step(&pq, &pt, 0.01);
            let e = rotation_error_angle(g.rotation(), &r_des);
            assert!(e < prev || e < 1e-12, "{prev} -> {e}");
            prev = e;
        }
        assert!(prev < 1e-3, "{prev}");
    }

    #[test]
    fn singular_geometry_holds_last_command() {
        let pt = Vec3::zeros();
        let pq = Vec3::new(3.0, 0.0, 3.0);
        let r0 = Rot3::from_axis_angle(&Vec3::y_axis(), FRAC_PI_2);
        let mut g = GimbalController::new(GimbalControllerConfig::default(), r0).unwrap();
        let w = g.step(&pq, &pt, 0.1);
        assert!(!g.held());
        // directly above the target
        let w2 = g.step(&Vec3::new(0.0, 0.0, 5.0), &pt, 0.1);
        assert!(g.held());
        assert_eq!(w, w2);
    }
}
