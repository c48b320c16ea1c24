use cineplan::coordination::{planning_round, EventLog, PlanBus, PlanOutcome, PlanRequest, RosterEntry};
use cineplan::dynamics::UavState;
use cineplan::nlp::{solve, SolveOptions, SolveStatus};
use cineplan::ocp::{build, NoFlyZone, OcpProblem, PlannerWeights};
use cineplan::shots::{predict_target, DesiredState, TargetEstimate};
use cineplan::sim::{run, Scenario};
use cineplan::Vec3;

const N: usize = 30;
const DT: f64 = 0.1;

fn request(id: &str, priority: u32, start: Vec3, goal: Vec3) -> PlanRequest {
    let v = Vec3::new(1.0, 0.0, 0.0);
    let pred = predict_target(&TargetEstimate::new(Vec3::zeros(), v), N, DT);
    let desired = DesiredState {
        position: goal,
        velocity: v,
    };
    let mut problem = OcpProblem::new(UavState::new(start, v), N, DT, desired, pred.samples);
    problem.weights = PlannerWeights {
        w1: 1.0,
        w2: 10.0,
        w3: 0.0,
        w4: 1.0,
    };
    problem.zones = vec![NoFlyZone::circle([0.0, -6.0], 1.0)];
    // paths pass close to the target; only the team constraints matter here
    problem.bounds.theta_max = -0.1;
    PlanRequest {
        uav_id: id.into(),
        priority,
        problem,
        previous: None,
        options: SolveOptions::default(),
        force_failure: false,
    }
}

/// Three UAVs whose straight paths to their goals cross.
fn crossing_team() -> Vec<PlanRequest> {
    vec![
        request("uav1", 1, Vec3::new(-3.0, -4.0, 3.0), Vec3::new(3.0, 4.0, 3.0)),
        request("uav2", 2, Vec3::new(-3.0, 4.0, 3.0), Vec3::new(3.0, -4.0, 3.0)),
        request("uav3", 3, Vec3::new(3.0, 2.0, 3.0), Vec3::new(-3.0, 2.0, 3.0)),
    ]
}

fn roster(reqs: &[PlanRequest]) -> Vec<RosterEntry> {
    reqs.iter()
        .map(|r| RosterEntry {
            uav_id: r.uav_id.clone(),
            priority: r.priority,
        })
        .collect()
}

fn round(reqs: &[PlanRequest]) -> (Vec<PlanOutcome>, EventLog) {
    let mut bus = PlanBus::new(0.0).unwrap();
    let mut log = EventLog::new(true);
    let out = planning_round(reqs, &roster(reqs), &mut bus, 0.0, &mut log).unwrap();
    (out, log)
}

#[test]
fn top_priority_plan_ignores_teammates() {
    let team = crossing_team();
    let (alone, _) = round(&team[..1]);
    let (together, _) = round(&team);
    assert_eq!(alone[0].result.z, together[0].result.z);
    assert_eq!(alone[0].plan, together[0].plan);
}

#[test]
fn round_runs_in_priority_order() {
    let (_, log) = round(&crossing_team());
    let order: Vec<&str> = log.iter_kind("solve").map(|e| e.uav_id.as_str()).collect();
    assert_eq!(order, ["uav1", "uav2", "uav3"]);
}

#[test]
fn converged_round_keeps_planned_separation_and_visibility() {
    let team = crossing_team();
    let (out, _) = round(&team);
    assert!(out.iter().all(|o| o.result.status == SolveStatus::Converged));
    let tol = SolveOptions::default().feasibility_tol;
    let r_col = team[0].problem.bounds.r_col;
    let cos_alpha = team[0].problem.bounds.alpha.cos();
    let plans: Vec<_> = out.iter().map(|o| o.plan.as_ref().unwrap()).collect();
    for (i, lo) in plans.iter().enumerate() {
        for hi in &plans[..i] {
            for k in 0..=N {
                let t = k as f64 * DT;
                let (p, o) = (lo.position_at(t), hi.position_at(t));
                let d2 = (p - o).norm_squared();
                assert!(
                    d2 >= r_col * r_col - tol,
                    "{} vs {} at k={k}: {:.4}",
                    lo.uav_id,
                    hi.uav_id,
                    d2.sqrt()
                );
                // only the lower-priority camera is guaranteed not to see the other
                let q = p - team[i].problem.target[k].position;
                let d = p - o;
                assert!(q.dot(&d) / (q.norm() * d.norm()) <= cos_alpha + tol);
            }
        }
    }
}

#[test]
fn warm_start_from_optimum_reconverges_quickly() {
    let req = request("uav1", 1, Vec3::new(-3.0, -4.0, 3.0), Vec3::new(3.0, 4.0, 3.0));
    let nlp = build(req.problem).unwrap();
    let cold = solve(
        &nlp,
        &SolveOptions {
            initial_guess: nlp.hover_guess(),
            ..Default::default()
        },
    );
    assert_eq!(cold.status, SolveStatus::Converged);
    let warm = solve(
        &nlp,
        &SolveOptions {
            initial_guess: cold.z.clone(),
            initial_multipliers: Some(cold.multipliers.clone()),
            ..Default::default()
        },
    );
    assert_eq!(warm.status, SolveStatus::Converged);
    assert!(warm.iterations <= 3, "{} iterations", warm.iterations);
}

#[test]
fn solves_happen_on_planning_ticks() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/lateral.json")).unwrap();
    let s = Scenario::from_json_str(&text, &[]).unwrap();
    let out = run(&s).unwrap();
    let period = 1.0 / s.planner.rate;
    for e in out.events.iter_kind("solve") {
        let ticks = e.time / period;
        assert!((ticks - ticks.round()).abs() < 1e-9, "solve at {}", e.time);
    }
    assert!(out.audits.iter().all(|a| a.passed()));
}
