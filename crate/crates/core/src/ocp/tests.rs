use super::*;
use crate::nlp::{kkt_audit, solve, SolveOptions, SolveStatus};
use crate::shots::{predict_target, TargetEstimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn straight_target(n: usize, dt: f64) -> Vec<TargetSample> {
    predict_target(&TargetEstimate::new(Vec3::zeros(), Vec3::new(1.5, 0.0, 0.0)), n, dt).samples
}

fn base(n: usize) -> OcpProblem {
    let x0 = UavState::new(Vec3::new(-10.0, 6.0, 3.0), Vec3::new(1.5, 0.0, 0.0));
    let desired = DesiredState {
        position: Vec3::new(0.0, 8.0, 3.0),
        velocity: Vec3::new(1.5, 0.0, 0.0),
    };
    OcpProblem::new(x0, n, 0.1, desired, straight_target(n, 0.1))
}

#[test]
fn counting_without_obstacles() {
    let nlp = build(base(2)).unwrap();
    assert_eq!(nlp.num_vars(), 24);
    assert_eq!(nlp.num_eq(), 18);
    assert_eq!(nlp.num_box_rows(), 24);
    // pitch and yaw rows only
    assert_eq!(nlp.num_ineq(), 4 * 3);
}

#[test]
fn neighbor_adds_collision_and_visibility_rows() {
    let n = 10;
    let without = build(base(n)).unwrap().num_ineq();
    let mut p = base(n);
    p.neighbors.push(NeighborTrack {
        label: "uav1".into(),
        positions: vec![Vec3::new(5.0, 5.0, 5.0); n + 1],
    });
    let with = build(p).unwrap();
    assert_eq!(with.num_ineq() - without, 22);
    let labels = with.row_labels();
    assert_eq!(
        labels.iter().filter(|l| l.starts_with("ineq collision[uav1]")).count(),
        11
    );
    assert_eq!(
        labels.iter().filter(|l| l.starts_with("ineq visibility[uav1]")).count(),
        11
    );
}

#[test]
fn inconsistent_lengths_rejected() {
    let mut p = base(10);
    p.target.truncate(5);
    assert!(matches!(build(p), Err(Error::Build(_))));
    let mut p = base(10);
    p.neighbors.push(NeighborTrack {
        label: "a".into(),
        positions: vec![Vec3::zeros(); 3],
    });
    assert!(build(p).is_err());
    let mut p = base(10);
    p.weights = PlannerWeights {
        w1: 0.0,
        w2: 0.0,
        w3: 0.0,
        w4: 0.0,
    };
    assert!(build(p).is_err());
}

#[test]
fn hover_cost_is_zero_at_goal() {
    let n = 20;
    let p0 = Vec3::new(4.0, -3.0, 5.0);
    let target = vec![
        TargetSample {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
        };
        n + 1
    ];
    let desired = DesiredState {
        position: p0,
        velocity: Vec3::zeros(),
    };
    let mut p = OcpProblem::new(UavState::new(p0, Vec3::zeros()), n, 0.1, desired, target);
    p.weights = PlannerWeights {
        w1: 1.0,
        w2: 1.0,
        w3: 1.0,
        w4: 1.0,
    };
    let nlp = build(p).unwrap();
    let z = nlp.hover_guess();
    assert_eq!(nlp.cost(&z), 0.0);
}

#[test]
fn straight_line_reaching_goal_has_zero_cost_and_control_gradient() {
    let n = 10;
    let dt = 0.1;
    let v = Vec3::new(1.0, 0.5, 0.0);
    let p0 = Vec3::new(-4.0, 2.0, 3.0);
    let desired = DesiredState {
        position: p0 + v * (n as f64 * dt),
        velocity: v,
    };
    let mut p = OcpProblem::new(UavState::new(p0, v), n, dt, desired, straight_target(n, dt));
    p.weights = PlannerWeights {
        w1: 1.0,
        w2: 0.0,
        w3: 0.0,
        w4: 1.0,
    };
    let nlp = build(p).unwrap();
    let states: Vec<UavState> = (0..=n).map(|k| UavState::new(p0 + v * (k as f64 * dt), v)).collect();
    let z = nlp.encode(&states, &[]);
    let mut g = vec![0.0; nlp.num_vars()];
    let c = nlp.cost_and_gradient(&z, &mut g);
    assert!(c.abs() < 1e-20);
    assert!(g[6 * (n + 1)..].iter().all(|x| *x == 0.0));
}

#[test]
fn doubling_w1_doubles_effort_term() {
    let n = 8;
    let mut p = base(n);
    p.weights = PlannerWeights {
        w1: 1.0,
        w2: 0.0,
        w3: 0.0,
        w4: 0.0,
    };
    let a = build(p.clone()).unwrap();
    p.weights.w1 = 2.0;
    let b = build(p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z: Vec<f64> = (0..a.num_vars()).map(|_| rng.random_range(-2.0..2.0)).collect();
    assert_eq!(b.cost(&z), 2.0 * a.cost(&z));
}

#[test]
fn collision_residual_zero_at_boundary() {
    let n = 3;
    let mut p = base(n);
    let x0 = p.initial_state.position;
    p.bounds.r_col = 2.0;
    p.obstacles.push(ObstacleTrack {
        label: "tree".into(),
        positions: vec![x0 + Vec3::new(0.0, 30.0, 0.0); n + 1],
        radius: 2.0,
    });
    let nlp = build(p).unwrap();
    // hover guess keeps the UAV at x0 for every step; place the obstacle row check at k=1
    let mut z = nlp.hover_guess();
    let (row, _) = nlp
        .rows()
        .iter()
        .enumerate()
        .find(|(_, r)| matches!(r.kind, RowKind::Collision(_)) && r.step == 1)
        .unwrap();
    z[6] = x0.x;
    z[7] = x0.y + 28.0;
    z[8] = x0.z;
    let mut res = vec![0.0; nlp.num_constraints()];
    nlp.constraints(&z, &mut res);
    assert!(res[row].abs() < 1e-12);
}

#[test]
fn visibility_example_value() {
    let n = 1;
    // camera at origin-relative q=(1,0,0) from target, neighbor along -y so d=(0,1,0)
    let target = vec![
        TargetSample {
            position: Vec3::new(-1.0, 0.0, 0.0),
            velocity: Vec3::zeros(),
        };
        n + 1
    ];
    let p0 = Vec3::zeros();
    let desired = DesiredState {
        position: p0,
        velocity: Vec3::zeros(),
    };
    let mut p = OcpProblem::new(UavState::new(p0, Vec3::x()), n, 0.1, desired, target);
    p.bounds.alpha = std::f64::consts::FRAC_PI_6;
    p.neighbors.push(NeighborTrack {
        label: "n".into(),
        positions: vec![Vec3::new(0.0, -1.0, 0.0); n + 1],
    });
    let nlp = build(p).unwrap();
    let z = nlp.encode(&[UavState::new(p0, Vec3::x()); 2], &[]);
    let mut res = vec![0.0; nlp.num_constraints()];
    nlp.constraints(&z, &mut res);
    let last = *res.last().unwrap();
    assert!((last - 0.8660254037844387).abs() < 1e-12, "{last}");

    // collinear neighbor is inside the cone
    let mut p = nlp.problem().clone();
    p.neighbors[0].positions = vec![Vec3::new(-0.5, 0.0, 0.0); n + 1];
    p.initial_state.position = Vec3::new(0.0, 0.0, 0.0);
    let nlp = build(p).unwrap();
    nlp.constraints(&z, &mut res);
    assert!(*res.last().unwrap() < 0.0);
}

#[test]
fn row_order_is_stable() {
    let n = 1;
    let mut p = base(n);
    p.zones.push(NoFlyZone::circle([0.0, 0.0], 2.0));
    p.neighbors.push(NeighborTrack {
        label: "uav1".into(),
        positions: vec![Vec3::new(5.0, 5.0, 5.0); n + 1],
    });
    p.obstacles.push(ObstacleTrack {
        label: "target".into(),
        positions: vec![Vec3::zeros(); n + 1],
        radius: 1.0,
    });
    let labels = build(p).unwrap().row_labels();
    let expected = [
        "eq initial px",
        "eq initial py",
        "eq initial pz",
        "eq initial vx",
        "eq initial vy",
        "eq initial vz",
        "eq dynamics k=0 px",
        "eq dynamics k=0 py",
        "eq dynamics k=0 pz",
        "eq dynamics k=0 vx",
        "eq dynamics k=0 vy",
        "eq dynamics k=0 vz",
        "ineq zone[0] k=0",
        "ineq zone[0] k=1",
        "ineq collision[uav1] k=0",
        "ineq collision[uav1] k=1",
        "ineq collision[target] k=0",
        "ineq collision[target] k=1",
        "ineq pitch_min k=0",
        "ineq pitch_max k=0",
        "ineq pitch_min k=1",
        "ineq pitch_max k=1",
        "ineq yaw_min k=0",
        "ineq yaw_max k=0",
        "ineq yaw_min k=1",
        "ineq yaw_max k=1",
        "ineq visibility[uav1] k=0",
        "ineq visibility[uav1] k=1",
    ];
    assert_eq!(labels, expected);
}

#[test]
fn initial_violation_recovers_linearly() {
    let n = 15;
    let mut p = base(n);
    let dt = p.dt;
    // directly above the target: pitch 0 violates θ ≤ -π/4
    p.initial_state = UavState::new(Vec3::new(0.0, 0.0, 5.0), Vec3::x());
    let nlp = build(p).unwrap();
    let relax = nlp.initial_relaxation();
    let rows = &nlp.rows()[nlp.num_eq()..];
    let idx = rows
        .iter()
        .position(|r| r.kind == RowKind::PitchMax && r.step == 0)
        .unwrap();
    assert!(relax[idx] < 0.0);
    let idx1 = rows
        .iter()
        .position(|r| r.kind == RowKind::PitchMax && r.step == 1)
        .unwrap();
    assert!((relax[idx1] - relax[idx] * (1.0 - dt / RECOVERY_TIME)).abs() < 1e-12);
    let steps = (RECOVERY_TIME / dt).ceil() as usize;
    for k in steps..=n {
        let i = rows
            .iter()
            .position(|r| r.kind == RowKind::PitchMax && r.step == k)
            .unwrap();
        assert_eq!(relax[i], 0.0);
    }
    let mut res = vec![0.0; nlp.num_constraints()];
    nlp.constraints(&nlp.hover_guess(), &mut res);
    assert!(res[nlp.num_eq() + idx].abs() < 1e-12);
}

#[test]
fn zone_violation_is_relaxed_at_every_step() {
    let n = 4;
    let mut p = base(n);
    p.zones = vec![NoFlyZone::circle([6.0, 0.5], 1.0)];
    p.initial_state = UavState::new(Vec3::new(6.0, 0.0, 3.0), Vec3::zeros());
    let nlp = build(p).unwrap();
    let rows = &nlp.rows()[nlp.num_eq()..];
    let zone_rows: Vec<usize> = (0..rows.len()).filter(|&j| rows[j].kind == RowKind::Zone(0)).collect();
    assert_eq!(zone_rows.len(), n + 1);
    for &j in &zone_rows {
        assert!((nlp.initial_relaxation()[j] + 0.5).abs() < 1e-9);
    }
    let mut res = vec![0.0; nlp.num_constraints()];
    nlp.constraints(&nlp.hover_guess(), &mut res);
    for &j in &zone_rows {
        assert!(res[nlp.num_eq() + j].abs() < 1e-9);
    }
}

#[test]
fn hover_problem_solves_to_zero_control() {
    let n = 20;
    let p0 = Vec3::new(6.0, 0.0, 3.0);
    let target = vec![
        TargetSample {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
        };
        n + 1
    ];
    let desired = DesiredState {
        position: p0,
        velocity: Vec3::zeros(),
    };
    let p = OcpProblem::new(UavState::new(p0, Vec3::zeros()), n, 0.1, desired, target);
    let nlp = build(p).unwrap();
    let mut guess = nlp.hover_guess();
    // perturb the controls so the solver has something to do
    for (i, z) in guess.iter_mut().enumerate().skip(6 * (n + 1)) {
        *z = 0.1 * ((i % 7) as f64 - 3.0);
    }
    let r = solve(
        &nlp,
        &SolveOptions {
            initial_guess: guess,
            ..Default::default()
        },
    );
    assert_eq!(r.status, SolveStatus::Converged);
    assert!(r.cost <= 1e-6, "cost {}", r.cost);
    assert!(kkt_audit(&nlp, &r.z, &r.multipliers).satisfied(1e-4, 1e-3));
}
