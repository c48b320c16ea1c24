//! Embedded self-check suite: analytic derivatives against finite
//! differences, integrator exactness, attitude round trip and a KKT audit of
//! a solved planning problem.
//!
//! Every check draws its sample points from a seeded generator, so a report
//! is reproducible.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    acceleration_from_attitude, recover_attitude, step_rk4, ControlInput, PhysicsConstants, UavState,
};
use crate::gimbal::{gimbal_rates, relative_gimbal_angles, world_gimbal_angles, RelativePosition};
use crate::nlp::{kkt_audit, solve, Nlp, SolveOptions, SolveStatus, SparseMatrix};
use crate::ocp::{build, terms, NeighborTrack, NoFlyZone, OcpProblem, PlannerWeights, TranscribedNlp};
use crate::shots::{predict_target, DesiredState, TargetEstimate};
use crate::{wrap_angle, Vec3};

pub const GRADIENT_TOL: f64 = 1e-5;
pub const RK4_TOL: f64 = 1e-12;
pub const ATTITUDE_TOL: f64 = 1e-9;
pub const GIMBAL_RATE_TOL: f64 = 1e-5;

/// Default number of random sample points per check.
pub const DEFAULT_POINTS: usize = 100;

/// Keeps sample points this far (rad) from the ±π wrap of the relative yaw.
const WRAP_CLEARANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst error over all samples, in the unit of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, worst: f64, tolerance: f64, samples: usize, detail: String) -> Self {
        Self {
            name,
            passed: worst.is_finite() && worst <= tolerance,
            worst,
            tolerance,
            samples,
            detail,
        }
    }
}

/// Runs every check with `points` samples each.
pub fn run_all(points: usize, seed: u64) -> Vec<CheckResult> {
    vec![
        cost_gradient_check(points, seed),
        constraint_jacobian_check(points, seed.wrapping_add(1)),
        rk4_check(points, seed.wrapping_add(2)),
        attitude_round_trip_check(points, seed.wrapping_add(3)),
        gimbal_rate_check(points, seed.wrapping_add(4)),
        kkt_audit_check(),
    ]
}

/// Fourth-order central difference of `f` along coordinate `i`.
fn central_difference(z: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let z0 = z[i];
    let mut at = |s: f64, z: &mut [f64]| {
        z[i] = z0 + s * h;
        f(z)
    };
    let d = (-at(2.0, z) + 8.0 * at(1.0, z) - 8.0 * at(-1.0, z) + at(-2.0, z)) / (12.0 * h);
    z[i] = z0;
    d
}

fn step_size(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(unit(rng), unit(rng), unit(rng)) * scale
}

/// A planning problem with every constraint family active, and a random
/// decision vector away from the points where the model is not smooth.
fn random_problem(rng: &mut ChaCha8Rng) -> (TranscribedNlp, Vec<f64>) {
    let n = 8;
    let dt = 0.1;
    let target_v = Vec3::new(rng.random_range(0.5..2.0), unit(rng), 0.0);
    let pred = predict_target(&TargetEstimate::new(Vec3::zeros(), target_v), n, dt);
    let x0 = UavState::new(
        Vec3::new(
            rng.random_range(-12.0..-4.0),
            rng.random_range(2.0..8.0),
            rng.random_range(2.0..5.0),
        ),
        target_v + random_vec(rng, 0.5),
    );
    let desired = DesiredState {
        position: Vec3::new(5.0, 6.0, 3.0),
        velocity: target_v,
    };
    let mut p = OcpProblem::new(x0, n, dt, desired, pred.samples.clone());
    p.weights = PlannerWeights {
        w1: rng.random_range(0.5..2.0),
        w2: 10f64.powf(rng.random_range(0.0..4.0)),
        w3: rng.random_range(0.1..1.0),
        w4: 1.0,
    };
    p.zones = vec![
        NoFlyZone::circle([unit(rng) * 5.0, 4.0 + unit(rng)], 1.5),
        NoFlyZone::Polygon {
            vertices: vec![[-3.0, -6.0], [2.0, -6.0], [2.0, -3.0], [-3.0, -4.0]],
        },
    ];
    let mate = Vec3::new(-4.0, -3.0, 4.0) + random_vec(rng, 2.0);
    p.neighbors.push(NeighborTrack {
        label: "mate".into(),
        positions: (0..=n).map(|k| mate + target_v * (k as f64 * dt)).collect(),
    });
    p.margins.zone = 0.2;
    p.margins.visibility = 0.01;
    let nlp = build(p).expect("canned problem is well formed");

    let mut states = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let tgt = pred.samples[k].position;
        loop {
            let ring = rng.random_range(2.0..12.0);
            let phi = rng.random_range(-PI..PI);
            let pos = tgt + Vec3::new(ring * phi.cos(), ring * phi.sin(), rng.random_range(1.0..6.0));
            let heading = rng.random_range(-PI..PI);
            let speed = rng.random_range(0.3..3.0);
            let vel = Vec3::new(speed * heading.cos(), speed * heading.sin(), unit(rng));
            let yaw = terms::relative_yaw_angle(&(pos - tgt), &vel).value;
            if PI - yaw.abs() > WRAP_CLEARANCE {
                states.push(UavState::new(pos, vel));
                break;
            }
        }
    }
    let controls: Vec<ControlInput> = (0..n).map(|_| ControlInput::new(random_vec(rng, 2.0))).collect();
    let z = nlp.encode(&states, &controls);
    (nlp, z)
}

/// Worst `max_i |g_i - fd_i| / max(1, |g|∞)` of the planning cost gradient.
pub fn cost_gradient_check(points: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..points {
        let (nlp, mut z) = random_problem(&mut rng);
        let mut g = vec![0.0; nlp.num_vars()];
        nlp.cost_and_gradient(&z, &mut g);
        let scale = g.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        for i in 0..z.len() {
            let h = step_size(z[i]);
            let fd = central_difference(&mut z, i, h, |z| nlp.cost(z));
            worst = worst.max((g[i] - fd).abs() / scale);
        }
    }
    CheckResult::new(
        "cost gradient vs finite differences",
        worst,
        GRADIENT_TOL,
        points,
        "relative to |grad|inf".into(),
    )
}

/// Worst per-row `max_j |J_rj - fd_rj| / max(1, |J_r|∞)` of the constraint Jacobian.
pub fn constraint_jacobian_check(points: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut worst_row = String::new();
    for _ in 0..points {
        let (nlp, mut z) = random_problem(&mut rng);
        let (m, nv) = (nlp.num_constraints(), nlp.num_vars());
        let mut res = vec![0.0; m];
        let mut jac = SparseMatrix::new(m, nv);
        nlp.constraints_and_jacobian(&z, &mut res, &mut jac);
        let dense = jac.to_dense();
        let mut fd = vec![vec![0.0; nv]; m];
        let mut buf = vec![0.0; m];
        for j in 0..nv {
            let h = step_size(z[j]);
            let z0 = z[j];
            let mut col = vec![0.0; m];
            for (s, w) in [(2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0)] {
                z[j] = z0 + s * h;
                nlp.constraints(&z, &mut buf);
                for r in 0..m {
                    col[r] += w * buf[r];
                }
            }
            z[j] = z0;
            for r in 0..m {
                fd[r][j] = col[r] / (12.0 * h);
            }
        }
        let labels = nlp.row_labels();
        for r in 0..m {
            let scale = dense[r].iter().fold(1.0_f64, |a, x| a.max(x.abs()));
            let err = dense[r]
                .iter()
                .zip(&fd[r])
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
                / scale;
            if err > worst {
                worst = err;
                worst_row = labels[r].clone();
            }
        }
    }
    let detail = if worst_row.is_empty() {
        "relative to row |J|inf".to_string()
    } else {
        format!("relative to row |J|inf, worst row {worst_row}")
    };
    CheckResult::new(
        "constraint jacobian vs finite differences",
        worst,
        GRADIENT_TOL,
        points,
        detail,
    )
}

/// RK4 step against the closed-form double-integrator solution.
pub fn rk4_check(points: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..points {
        let p = random_vec(&mut rng, 50.0);
        let v = random_vec(&mut rng, 5.0);
        let a = random_vec(&mut rng, 5.0);
        let dt = rng.random_range(0.01..1.0);
        let next = step_rk4(&UavState::new(p, v), &ControlInput::new(a), dt).expect("finite input");
        let p1 = p + v * dt + a * (0.5 * dt * dt);
        let v1 = v + a * dt;
        worst = worst.max((next.position - p1).amax()).max((next.velocity - v1).amax());
    }
    CheckResult::new(
        "rk4 step vs closed form",
        worst,
        RK4_TOL,
        points,
        "absolute, |p| <= 50 m".into(),
    )
}

/// Acceleration → thrust and attitude → acceleration.
pub fn attitude_round_trip_check(points: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let consts = PhysicsConstants::default();
    let mut worst = 0.0_f64;
    for _ in 0..points {
        let heading = rng.random_range(-PI..PI);
        let v = Vec3::new(heading.cos(), heading.sin(), 0.0) * rng.random_range(0.2..5.0);
        let a = random_vec(&mut rng, 5.0);
        let att = recover_attitude(&v, &a, &consts).expect("specific force is nonzero");
        let back = acceleration_from_attitude(&att, &consts);
        worst = worst.max((back - a).amax());
    }
    CheckResult::new(
        "attitude round trip",
        worst,
        ATTITUDE_TOL,
        points,
        "absolute, m/s^2".into(),
    )
}

/// Analytic camera pitch and relative yaw rates against differences of the
/// angles along a constant-acceleration motion.
pub fn gimbal_rate_check(points: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst = 0.0_f64;
    let mut taken = 0;
    while taken < points {
        let q = Vec3::new(unit(&mut rng) * 10.0, unit(&mut rng) * 10.0, rng.random_range(0.5..8.0));
        let q_dot = random_vec(&mut rng, 2.0);
        let heading = rng.random_range(-PI..PI);
        let v = Vec3::new(heading.cos(), heading.sin(), unit(&mut rng) * 0.3) * rng.random_range(0.5..3.0);
        let a = random_vec(&mut rng, 2.0);
        if q.x.hypot(q.y) < 1.0 {
            continue;
        }
        let angles = |s: f64| {
            let qs = RelativePosition::new(q + q_dot * s).expect("camera above the target");
            let vs = v + a * s;
            let rel = relative_gimbal_angles(&qs, &vs).expect("moving airframe");
            (world_gimbal_angles(&qs).pitch, rel.yaw)
        };
        let rates = gimbal_rates(
            &RelativePosition::new(q).expect("camera above the target"),
            &q_dot,
            &v,
            &a,
        )
        .expect("moving airframe");
        let (p2, y2) = angles(2.0 * h);
        let (p1, y1) = angles(h);
        let (m1, n1) = angles(-h);
        let (m2, n2) = angles(-2.0 * h);
        let (_, y0) = angles(0.0);
        if PI - y0.abs() < WRAP_CLEARANCE {
            continue;
        }
        let fd = |f2: f64, f1: f64, b1: f64, b2: f64| (-wrap_angle(f2 - b2) + 8.0 * wrap_angle(f1 - b1)) / (12.0 * h);
        let fd_pitch = fd(p2, p1, m1, m2);
        let fd_yaw = fd(y2, y1, n1, n2);
        let err_p = (rates.0 - fd_pitch).abs() / rates.0.abs().max(1.0);
        let err_y = (rates.1 - fd_yaw).abs() / rates.1.abs().max(1.0);
        worst = worst.max(err_p).max(err_y);
        taken += 1;
    }
    CheckResult::new(
        "gimbal rates vs finite differences",
        worst,
        GIMBAL_RATE_TOL,
        points,
        "relative to max(1, |rate|)".into(),
    )
}

/// Solves a flyby planning problem with a zone and a teammate and audits
/// the result from the problem alone.
pub fn kkt_audit_check() -> CheckResult {
    let n = 40;
    let dt = 0.1;
    let target_v = Vec3::new(1.5, 0.0, 0.0);
    let pred = predict_target(&TargetEstimate::new(Vec3::zeros(), target_v), n, dt);
    let x0 = UavState::new(Vec3::new(-8.0, 3.0, 3.0), target_v);
    let desired = DesiredState {
        position: Vec3::new(6.0, 3.0, 3.0),
        velocity: target_v,
    };
    let mut p = OcpProblem::new(x0, n, dt, desired, pred.samples);
    p.weights = PlannerWeights {
        w1: 1.0,
        w2: 100.0,
        w3: 0.5,
        w4: 1.0,
    };
    p.zones = vec![NoFlyZone::circle([-3.0, 2.5], 1.5)];
    p.neighbors.push(NeighborTrack {
        label: "mate".into(),
        positions: (0..=n)
            .map(|k| Vec3::new(-6.0, -4.0, 4.0) + target_v * (k as f64 * dt))
            .collect(),
    });
    let nlp = build(p).expect("canned problem is well formed");
    let opts = SolveOptions {
        initial_guess: nlp.hover_guess(),
        ..Default::default()
    };
    let r = solve(&nlp, &opts);
    if r.status != SolveStatus::Converged {
        return CheckResult::new(
            "kkt audit of a solved plan",
            f64::INFINITY,
            1.0,
            1,
            format!("solver status {}", r.status),
        );
    }
    let audit = kkt_audit(&nlp, &r.z, &r.multipliers);
    // normalized so that 1 means "at the tolerance"
    let worst = (audit.feasibility / opts.feasibility_tol)
        .max(audit.stationarity / opts.optimality_tol)
        .max(audit.complementarity / opts.optimality_tol)
        .max(audit.dual_infeasibility / opts.optimality_tol);
    let detail = format!(
        "feas {:.1e} stat {:.1e} compl {:.1e}, {} iterations",
        audit.feasibility, audit.stationarity, audit.complementarity, r.iterations
    );
    CheckResult::new("kkt audit of a solved plan", worst, 1.0, 1, detail)
}

/// Plain-text pass/fail table.
pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{:<4}  {:<width$}  worst {:>9.2e}  tol {:>7.1e}  n={:<4} {}\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.worst,
            r.tolerance,
            r.samples,
            r.detail,
        ));
    }
    out
}
