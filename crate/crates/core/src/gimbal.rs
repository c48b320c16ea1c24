//! Camera/gimbal orientation geometry.
//!
//! The camera frame has its z-axis along the optical axis with opposite sign,
//! so a camera pointing at the target has its third column equal to
//! `q/|q|` with `q = p_C - p_T`. The camera is kept level (zero roll), which
//! leaves pitch and yaw as explicit functions of `q`. Relative angles w.r.t.
//! the airframe assume small airframe roll and pitch.

use crate::dynamics::velocity_yaw;
use crate::{wrap_angle, Error, Result, Rot3, Vec3};

/// Camera position relative to the filmed target, `p_C - p_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePosition(Vec3);

impl RelativePosition {
    /// Requires the camera to be above the target and not directly above it.
    pub fn new(q: Vec3) -> Result<Self> {
        if !q.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("relative position"));
        }
        if !(q.z > 0.0) {
            return Err(Error::GimbalSingular(format!(
                "camera not above target (q_z = {})",
                q.z
            )));
        }
        if q.x.hypot(q.y) == 0.0 {
            return Err(Error::GimbalSingular("camera directly above target".into()));
        }
        Ok(Self(q))
    }

    pub fn from_positions(camera: &Vec3, target: &Vec3) -> Result<Self> {
        Self::new(camera - target)
    }

    pub fn vector(&self) -> &Vec3 {
        &self.0
    }

    pub fn horizontal_distance(&self) -> f64 {
        self.0.x.hypot(self.0.y)
    }
}

/// World-frame Z-Y-X Euler angles of the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

/// Gimbal angles relative to the airframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeGimbalAngles {
    pub pitch: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GimbalAngles {
    pub world: CameraAngles,
    pub relative: RelativeGimbalAngles,
}

pub fn world_gimbal_angles(q: &RelativePosition) -> CameraAngles {
    let q = q.vector();
    CameraAngles {
        roll: 0.0,
        pitch: (-q.x.hypot(q.y)).atan2(q.z),
        yaw: wrap_angle((-q.y).atan2(-q.x)),
    }
}

pub fn relative_gimbal_angles(q: &RelativePosition, uav_velocity: &Vec3) -> Result<RelativeGimbalAngles> {
    let world = world_gimbal_angles(q);
    let heading = velocity_yaw(uav_velocity)?;
    Ok(RelativeGimbalAngles {
        pitch: world.pitch,
        yaw: wrap_angle(world.yaw - heading),
    })
}

pub fn gimbal_angles(q: &RelativePosition, uav_velocity: &Vec3) -> Result<GimbalAngles> {
    Ok(GimbalAngles {
        world: world_gimbal_angles(q),
        relative: relative_gimbal_angles(q, uav_velocity)?,
    })
}

/// Time derivatives of the camera pitch and of the relative gimbal yaw.
///
/// `q_dot = v_Q - v_T`. The pitch rate only depends on the relative motion;
/// the relative yaw rate subtracts the airframe heading rate
/// `(v_x a_y - v_y a_x) / (v_x² + v_y²)`.
pub fn gimbal_rates(q: &RelativePosition, q_dot: &Vec3, uav_velocity: &Vec3, uav_accel: &Vec3) -> Result<(f64, f64)> {
    velocity_yaw(uav_velocity)?;
    let q = q.vector();
    let rho2 = q.x * q.x + q.y * q.y;
    let rho = rho2.sqrt();
    let r2 = rho2 + q.z * q.z;
    let pitch_rate = (rho * q_dot.z - q.z * (q.x * q_dot.x + q.y * q_dot.y) / rho) / r2;
    let cam_yaw_rate = (q.x * q_dot.y - q.y * q_dot.x) / rho2;
    let v = uav_velocity;
    let heading_rate = (v.x * uav_accel.y - v.y * uav_accel.x) / (v.x * v.x + v.y * v.y);
    Ok((pitch_rate, cam_yaw_rate - heading_rate))
}

/// Camera rotation pointing at the target with a level horizontal axis:
/// columns `-q×(q×e3)/|..|`, `q×e3/|..|`, `q/|q|`.
pub fn camera_rotation(q: &RelativePosition) -> Rot3 {
    let q = q.vector();
    let e3 = Vec3::z();
    let qxe3 = q.cross(&e3);
    let c1 = -q.cross(&qxe3).normalize();
    let c2 = qxe3.normalize();
    let c3 = q.normalize();
    Rot3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[c1, c2, c3]))
}

/// Rotation assembled from world camera angles, `Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rotation_from_angles(angles: &CameraAngles) -> Rot3 {
    Rot3::from_euler_angles(angles.roll, angles.pitch, angles.yaw)
}
