//! Reference frames and the double-integrator quadrotor model.
//!
//! The world frame is East-North-Up. The planner state is position and
//! velocity; the control input is the 3D acceleration. Thrust and Z-Y-X Euler
//! angles can be recovered from velocity and acceleration when the yaw is
//! slaved to the direction of horizontal motion.

use serde::{Deserialize, Serialize};

use crate::{wrap_angle, Error, Result, Rot3, Vec3};

/// Horizontal speeds below this (m/s) leave the heading undefined.
pub const YAW_SPEED_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConstants {
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Vehicle mass, kg.
    pub mass: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            mass: 1.0,
        }
    }
}

impl PhysicsConstants {
    pub fn e3() -> Vec3 {
        Vec3::z()
    }
}

/// Position/velocity pair of one UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl UavState {
    pub fn new(position: Vec3, velocity: Vec3) -> Self {
        Self { position, velocity }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|x| x.is_finite())
    }

    pub fn to_array(&self) -> [f64; 6] {
        let (p, v) = (&self.position, &self.velocity);
        [p.x, p.y, p.z, v.x, v.y, v.z]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            position: Vec3::new(s[0], s[1], s[2]),
            velocity: Vec3::new(s[3], s[4], s[5]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub acceleration: Vec3,
}

impl ControlInput {
    pub fn new(acceleration: Vec3) -> Self {
        Self { acceleration }
    }

    pub fn zero() -> Self {
        Self::new(Vec3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.acceleration.iter().all(|x| x.is_finite())
    }
}

/// Thrust and Z-Y-X Euler angles (roll, pitch, yaw) of the airframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeThrust {
    pub thrust: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl AttitudeThrust {
    pub fn rotation(&self) -> Rot3 {
        Rot3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }
}

fn rhs(state: &[f64; 6], accel: &Vec3) -> [f64; 6] {
    [state[3], state[4], state[5], accel.x, accel.y, accel.z]
}

/// One classical Runge-Kutta step of `ṗ = v, v̇ = a` with `a` held over `dt`.
pub fn step_rk4(x: &UavState, u: &ControlInput, dt: f64) -> Result<UavState> {
    if !x.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("control"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let a = &u.acceleration;
    let s0 = x.to_array();
    let add = |s: &[f64; 6], k: &[f64; 6], h: f64| -> [f64; 6] { std::array::from_fn(|i| s[i] + h * k[i]) };
    let k1 = rhs(&s0, a);
    let k2 = rhs(&add(&s0, &k1, 0.5 * dt), a);
    let k3 = rhs(&add(&s0, &k2, 0.5 * dt), a);
    let k4 = rhs(&add(&s0, &k3, dt), a);
    let out: [f64; 6] = std::array::from_fn(|i| s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    Ok(UavState::from_slice(&out))
}

/// Heading of the direction of horizontal motion.
pub fn velocity_yaw(v: &Vec3) -> Result<f64> {
    let speed = v.x.hypot(v.y);
    if !(speed >= YAW_SPEED_THRESHOLD) {
        return Err(Error::YawUndefined(speed));
    }
    Ok(wrap_angle(v.y.atan2(v.x)))
}

/// Recovers thrust and airframe attitude from velocity and acceleration,
/// with yaw aligned to the direction of horizontal motion.
pub fn recover_attitude(v: &Vec3, a: &Vec3, consts: &PhysicsConstants) -> Result<AttitudeThrust> {
    if !v.iter().chain(a.iter()).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("velocity/acceleration"));
    }
    let yaw = velocity_yaw(v)?;
    recover_attitude_with_yaw(a, yaw, consts)
}

/// Same as [`recover_attitude`] with an externally held yaw (e.g. while hovering).
pub fn recover_attitude_with_yaw(a: &Vec3, yaw: f64, consts: &PhysicsConstants) -> Result<AttitudeThrust> {
    let f = a + consts.gravity * PhysicsConstants::e3();
    let n = f.norm();
    if !(n > 0.0) {
        return Err(Error::FreeFallSingularity(n));
    }
    let (s, c) = yaw.sin_cos();
    let lateral = ((a.y * c - a.x * s) / n).clamp(-1.0, 1.0);
    let roll = -lateral.asin();
    let pitch = (a.x * c + a.y * s).atan2(a.z + consts.gravity);
    Ok(AttitudeThrust {
        thrust: consts.mass * n,
        roll: wrap_angle(roll),
        pitch: wrap_angle(pitch),
        yaw: wrap_angle(yaw),
    })
}

/// Acceleration produced by a thrust/attitude pair.
pub fn acceleration_from_attitude(att: &AttitudeThrust, consts: &PhysicsConstants) -> Vec3 {
    let e3 = PhysicsConstants::e3();
    -consts.gravity * e3 + att.rotation() * (att.thrust / consts.mass * e3)
}
