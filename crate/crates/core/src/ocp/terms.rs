//! Smooth gimbal expressions used inside the planner, with first derivatives.
//!
//! The exact rate formulas divide by the horizontal camera-target distance and
//! by the horizontal speed. The planner adds a small constant to both squared
//! denominators so that the cost stays bounded when the UAV passes over the
//! target or hovers.

use crate::Vec3;

/// Regularization of the squared horizontal distance in the rate cost (m).
pub const RATE_DISTANCE_EPS: f64 = 0.1;
/// Regularization of the squared horizontal speed in heading rates (m/s).
pub const SPEED_EPS: f64 = 0.1;
/// Regularization of the horizontal distance in angle constraints (m).
pub const ANGLE_DISTANCE_EPS: f64 = 1e-3;

/// Value and gradient w.r.t. position, velocity and acceleration of the UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub value: f64,
    pub d_p: Vec3,
    pub d_v: Vec3,
    pub d_u: Vec3,
}

/// Camera pitch rate for relative position `q` and relative velocity `w`.
pub fn pitch_rate(q: &Vec3, w: &Vec3) -> Term {
    let s = q.x * q.x + q.y * q.y + RATE_DISTANCE_EPS * RATE_DISTANCE_EPS;
    let rho = s.sqrt();
    let h = q.x * w.x + q.y * w.y;
    let num = rho * w.z - q.z * h / rho;
    let den = s + q.z * q.z;
    let r = num / den;
    let rho3 = rho * s;
    let dn_dq = Vec3::new(
        w.z * q.x / rho - q.z * (w.x / rho - h * q.x / rho3),
        w.z * q.y / rho - q.z * (w.y / rho - h * q.y / rho3),
        -h / rho,
    );
    let dd_dq = 2.0 * q;
    let dn_dw = Vec3::new(-q.z * q.x / rho, -q.z * q.y / rho, rho);
    Term {
        value: r,
        d_p: (dn_dq - r * dd_dq) / den,
        d_v: dn_dw / den,
        d_u: Vec3::zeros(),
    }
}

/// Camera yaw rate relative to the airframe heading rate.
pub fn relative_yaw_rate(q: &Vec3, w: &Vec3, v: &Vec3, u: &Vec3) -> Term {
    let s = q.x * q.x + q.y * q.y + RATE_DISTANCE_EPS * RATE_DISTANCE_EPS;
    let a = (q.x * w.y - q.y * w.x) / s;
    let e = v.x * v.x + v.y * v.y + SPEED_EPS * SPEED_EPS;
    let b = (v.x * u.y - v.y * u.x) / e;
    let da_dq = Vec3::new((w.y - 2.0 * a * q.x) / s, (-w.x - 2.0 * a * q.y) / s, 0.0);
    let da_dw = Vec3::new(-q.y / s, q.x / s, 0.0);
    let db_dv = Vec3::new((u.y - 2.0 * b * v.x) / e, (-u.x - 2.0 * b * v.y) / e, 0.0);
    let db_du = Vec3::new(-v.y / e, v.x / e, 0.0);
    Term {
        value: a - b,
        d_p: da_dq,
        d_v: da_dw - db_dv,
        d_u: -db_du,
    }
}

/// Camera pitch `atan2(-ρ, q_z)`; depends on position only.
pub fn pitch_angle(q: &Vec3) -> Term {
    let s = q.x * q.x + q.y * q.y + ANGLE_DISTANCE_EPS * ANGLE_DISTANCE_EPS;
    let rho = s.sqrt();
    let den = s + q.z * q.z;
    Term {
        value: (-rho).atan2(q.z),
        d_p: Vec3::new(-q.z * q.x / (rho * den), -q.z * q.y / (rho * den), rho / den),
        d_v: Vec3::zeros(),
        d_u: Vec3::zeros(),
    }
}

/// Relative gimbal yaw, wrapped to (−π, π]; the gradient ignores the wrap.
/// Near a vanishing horizontal distance or speed the gradient magnitude is
/// capped instead of blowing up.
pub fn relative_yaw_angle(q: &Vec3, v: &Vec3) -> Term {
    let s = (q.x * q.x + q.y * q.y).max(ANGLE_DISTANCE_EPS * ANGLE_DISTANCE_EPS);
    let e = (v.x * v.x + v.y * v.y).max(SPEED_EPS * SPEED_EPS);
    let value = crate::wrap_angle((-q.y).atan2(-q.x) - v.y.atan2(v.x));
    Term {
        value,
        d_p: Vec3::new(-q.y / s, q.x / s, 0.0),
        d_v: Vec3::new(v.y / e, -v.x / e, 0.0),
        d_u: Vec3::zeros(),
    }
}

/// Horizontal speed below which the UAV heading is considered undefined (m/s).
pub const YAW_GATE_SPEED: f64 = 0.5;

/// Weight `w = s / (s + v₀²)`, `s = v_x² + v_y²`, scaling the relative yaw
/// limits so that they vanish at hover where the heading is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedGate {
    pub value: f64,
    pub d_v: Vec3,
    /// `w ∇_v ψ_Q`, finite at `v = 0` unlike `∇_v ψ_Q` alone.
    pub heading_d_v: Vec3,
}

pub fn speed_gate(v: &Vec3) -> SpeedGate {
    let s = v.x * v.x + v.y * v.y;
    let v0 = YAW_GATE_SPEED * YAW_GATE_SPEED;
    let den = s + v0;
    let dw = 2.0 * v0 / (den * den);
    SpeedGate {
        value: s / den,
        d_v: Vec3::new(dw * v.x, dw * v.y, 0.0),
        heading_d_v: Vec3::new(-v.y / den, v.x / den, 0.0),
    }
}

/// `cos β` between `q` and `d`, with gradients w.r.t. both vectors.
pub fn cos_between(q: &Vec3, d: &Vec3) -> (f64, Vec3, Vec3) {
    let (nq, nd) = (q.norm(), d.norm());
    let c = q.dot(d) / (nq * nd);
    let dq = d / (nq * nd) - c * q / (nq * nq);
    let dd = q / (nq * nd) - c * d / (nd * nd);
    (c, dq, dd)
}
