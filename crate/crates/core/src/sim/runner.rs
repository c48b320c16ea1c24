//! Fixed-step world simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::coordination::{planning_round, Event, EventLog, PlanBus, PlanRequest, PlannedTrajectory, RosterEntry};
use crate::dynamics::UavState;
use crate::execution::{GimbalController, TrajectoryFollower};
use crate::gimbal::{camera_rotation, RelativePosition};
use crate::nlp::KktReport;
use crate::ocp::{ObstacleTrack, OcpProblem};
use crate::shots::{desired_state, predict_target, ShotSpec};
use crate::sim::course::TargetTruth;
use crate::sim::metrics::{compute_metrics, ExecutedTrajectories, MetricsReport, UavSample, UavTrack};
use crate::sim::scenario::{ResolvedUav, Scenario};
use crate::{Error, Result, Rot3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// A UAV entered a no-fly zone or two UAVs came closer than half the collision radius.
    SafetyViolation,
    /// A UAV exhausted its allowance of consecutive rejected solves.
    SolverFailure,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::SafetyViolation => "safety_violation",
            RunStatus::SolverFailure => "solver_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub status: RunStatus,
    pub halt_reason: Option<String>,
    pub trajectories: ExecutedTrajectories,
    /// Wall-clock fields are zeroed when the scenario is deterministic.
    pub metrics: MetricsReport,
    pub events: EventLog,
    /// Raw per-UAV solve wall times (s), in priority order; never zeroed.
    pub solve_times: Vec<(String, Vec<f64>)>,
    /// KKT audit of every converged solve, in solve order.
    pub audits: Vec<SolveAudit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveAudit {
    pub time: f64,
    pub uav_id: String,
    pub report: KktReport,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
}

impl SolveAudit {
    pub fn passed(&self) -> bool {
        self.report.satisfied(self.feasibility_tol, self.optimality_tol)
    }
}

struct Agent {
    cfg: ResolvedUav,
    state: UavState,
    follower: TrajectoryFollower,
    gimbal: GimbalController,
    /// Warm start source; cleared after a rejected solve.
    warm: Option<PlannedTrajectory>,
    failures: usize,
    plan_period: usize,
    follow_period: usize,
    gimbal_period: usize,
    velocity_cmd: Vec3,
    hovering: bool,
    solve_times: Vec<f64>,
    solves: usize,
    accepted: usize,
    fallbacks: usize,
    starved: usize,
    samples: Vec<UavSample>,
}

fn steps_of(period: f64, dt: f64) -> usize {
    ((period / dt).round() as usize).max(1)
}

fn active_shot(shots: &[ShotSpec], t: f64) -> Option<&ShotSpec> {
    shots
        .iter()
        .find(|s| t + 1e-9 >= s.start_time && t < s.end_time() - 1e-9)
}

/// World pitch and yaw of a camera rotation (optical axis is the negated third column).
fn rotation_angles(r: &Rot3) -> (f64, f64) {
    let c = r.matrix().column(2);
    ((-c.x.hypot(c.y)).atan2(c.z), (-c.y).atan2(-c.x))
}

pub fn run(scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let dt = scenario.dt;
    let steps = scenario.steps();
    let truth = TargetTruth::new(&scenario.target.motion, scenario.target.position)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let noise = Normal::new(0.0, scenario.target.noise_std).map_err(|e| Error::Scenario(e.to_string()))?;
    let mut bus = PlanBus::new(scenario.bus_delay)?;
    let mut log = EventLog::new(scenario.deterministic);

    let resolved = scenario.resolved_uavs()?;
    let roster: Vec<RosterEntry> = resolved
        .iter()
        .map(|r| RosterEntry {
            uav_id: r.spec.id.clone(),
            priority: r.spec.priority,
        })
        .collect();
    let mut agents = Vec::with_capacity(resolved.len());
    let t0_target = truth.position(0.0);
    for r in resolved {
        let p = &r.planner;
        let state = r.spec.initial_state();
        let initial_rot = RelativePosition::from_positions(&state.position, &t0_target)
            .map(|q| camera_rotation(&q))
            .unwrap_or_else(|_| Rot3::identity());
        agents.push(Agent {
            follower: TrajectoryFollower::new(p.follower, p.bounds.v_min, p.bounds.v_max)?,
            gimbal: GimbalController::new(p.gimbal, initial_rot)?,
            state,
            warm: None,
            failures: 0,
            plan_period: steps_of(1.0 / p.rate, dt),
            follow_period: steps_of(1.0 / p.follower.rate, dt),
            gimbal_period: steps_of(1.0 / p.gimbal.rate, dt),
            velocity_cmd: Vec3::zeros(),
            hovering: false,
            solve_times: Vec::new(),
            solves: 0,
            accepted: 0,
            fallbacks: 0,
            starved: 0,
            samples: Vec::with_capacity(steps + 1),
            cfg: r,
        });
    }

    let mut target_track = Vec::with_capacity(steps + 1);
    let mut status = RunStatus::Completed;
    let mut halt_reason = None;
    let mut audits = Vec::new();
    let lag = (-dt / scenario.tau).exp();

    'sim: for i in 0..=steps {
        let t = dt * i as f64;
        let tp = truth.position(t);
        let tv = truth.velocity(t);
        let measured = if scenario.target.noise_std > 0.0 {
            tp + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            tp
        };

        if let Some(reason) = safety_check(scenario, &agents) {
            log.push(Event::note(t, "", "safety_violation", reason.clone()));
            status = RunStatus::SafetyViolation;
            halt_reason = Some(reason);
            record(&mut agents, &mut target_track, t, tp, tv);
            break;
        }

        // planning round among the UAVs whose period divides this step
        if i < steps {
            let mut requests = Vec::new();
            for a in &agents {
                if i % a.plan_period != 0 {
                    continue;
                }
                let Some(shot) = active_shot(&a.cfg.spec.shots, t) else {
                    continue;
                };
                let p = &a.cfg.planner;
                let est = truth.estimate(t, measured, scenario.target.known_course)?;
                let pred = predict_target(&est, p.horizon, p.dt);
                let desired = desired_state(shot, &pred, t - shot.start_time, p.horizon as f64 * p.dt)?;
                let mut problem = OcpProblem::new(a.state, p.horizon, p.dt, desired, pred.samples.clone());
                problem.weights = p.weights;
                problem.bounds = p.bounds;
                problem.margins = p.margins;
                problem.terminal_scale = p.terminal_scale;
                problem.visibility_enabled = p.visibility;
                problem.zones = scenario.zones.clone();
                if let Some(radius) = scenario.target.obstacle_radius {
                    problem.obstacles.push(ObstacleTrack {
                        label: "target".into(),
                        positions: pred.samples.iter().map(|s| s.position).collect(),
                        radius,
                    });
                }
                let force_failure = scenario
                    .faults
                    .iter()
                    .any(|f| f.uav == a.cfg.spec.id && fault_active(f.time, f.count, a.plan_period, dt, t));
                requests.push(PlanRequest {
                    uav_id: a.cfg.spec.id.clone(),
                    priority: a.cfg.spec.priority,
                    problem,
                    previous: a.warm.clone(),
                    options: p.solve_options(scenario.deterministic),
                    force_failure,
                });
            }
            if !requests.is_empty() {
                let outcomes = planning_round(&requests, &roster, &mut bus, t, &mut log)?;
                for (o, req) in outcomes.into_iter().zip(&requests) {
                    if let Some(report) = o.audit {
                        audits.push(SolveAudit {
                            time: t,
                            uav_id: o.uav_id.clone(),
                            report,
                            feasibility_tol: req.options.feasibility_tol,
                            optimality_tol: req.options.optimality_tol,
                        });
                    }
                    let a = agents.iter_mut().find(|a| a.cfg.spec.id == o.uav_id).unwrap();
                    a.solves += 1;
                    if let Some(plan) = o.plan {
                        a.solve_times.push(o.result.wall_time.as_secs_f64());
                        a.accepted += 1;
                        a.failures = 0;
                        a.follower.set_plan(plan.clone());
                        a.warm = Some(plan);
                    } else {
                        a.failures += 1;
                        a.fallbacks += 1;
                        a.warm = None;
                        let covered = a.follower.plan().map(|p| p.end_time()).filter(|&e| e > t);
                        let detail = match covered {
                            Some(end) => format!("keep previous plan until {end:.2}s; next solve from hover"),
                            None => "hover; next solve from hover".to_string(),
                        };
                        log.push(Event::note(t, &o.uav_id, "fallback", detail));
                        if a.failures >= scenario.max_consecutive_failures {
                            let reason = format!("{} rejected {} consecutive solves", o.uav_id, a.failures);
                            log.push(Event::note(t, &o.uav_id, "solver_failure", reason.clone()));
                            status = RunStatus::SolverFailure;
                            halt_reason = Some(reason);
                            record(&mut agents, &mut target_track, t, tp, tv);
                            break 'sim;
                        }
                    }
                }
            }
        }

        // follower and gimbal
        for a in &mut agents {
            if i % a.follow_period == 0 {
                let c = a.follower.command(&a.state.position, t);
                a.velocity_cmd = c.velocity;
                if c.exhausted {
                    if active_shot(&a.cfg.spec.shots, t).is_some() {
                        a.starved += 1;
                    }
                    if !a.hovering {
                        log.push(Event::note(t, &a.cfg.spec.id, "hover", "no remaining waypoints"));
                    }
                }
                a.hovering = c.exhausted;
            }
            if i % a.gimbal_period == 0 {
                a.gimbal.step(&a.state.position, &measured, dt * a.gimbal_period as f64);
            }
        }
        record(&mut agents, &mut target_track, t, tp, tv);
        if i == steps {
            break;
        }

        // first-order velocity loop, exact for a piecewise-constant command
        for a in &mut agents {
            let (v, c) = (a.state.velocity, a.velocity_cmd);
            a.state = UavState::new(
                a.state.position + c * dt + (v - c) * scenario.tau * (1.0 - lag),
                c + (v - c) * lag,
            );
        }
    }

    let trajectories = ExecutedTrajectories {
        dt,
        target: target_track,
        uavs: agents
            .iter_mut()
            .map(|a| UavTrack {
                id: a.cfg.spec.id.clone(),
                alpha: a.cfg.planner.bounds.alpha,
                samples: std::mem::take(&mut a.samples),
            })
            .collect(),
    };
    let mut metrics = compute_metrics(&trajectories, &scenario.zones)?;
    metrics.name = scenario.name.clone();
    metrics.status = status.as_str().to_string();
    for (m, a) in metrics.uavs.iter_mut().zip(&agents) {
        m.solve.solves = a.solves;
        m.solve.accepted = a.accepted;
        m.solve.fallbacks = a.fallbacks;
        m.solve.starved_steps = a.starved;
        if !a.solve_times.is_empty() {
            m.solve.avg_solve_time = a.solve_times.iter().sum::<f64>() / a.solve_times.len() as f64;
            m.solve.max_solve_time = a.solve_times.iter().cloned().fold(0.0, f64::max);
        }
    }
    if scenario.deterministic {
        metrics.zero_wall_clock();
    }
    Ok(SimOutput {
        status,
        halt_reason,
        trajectories,
        metrics,
        events: log,
        solve_times: agents
            .iter()
            .map(|a| (a.cfg.spec.id.clone(), a.solve_times.clone()))
            .collect(),
        audits,
    })
}

/// Whether the `count` planning slots starting at `start` include time `t`.
fn fault_active(start: f64, count: usize, period: usize, dt: f64, t: f64) -> bool {
    let span = count as f64 * period as f64 * dt;
    t + 1e-9 >= start && t < start + span - 1e-9
}

fn record(agents: &mut [Agent], target: &mut Vec<(Vec3, Vec3)>, t: f64, tp: Vec3, tv: Vec3) {
    target.push((tp, tv));
    for a in agents {
        let accel_cmd = match a.follower.plan() {
            Some(p) if !a.hovering => plan_accel(p, t),
            _ => Vec3::zeros(),
        };
        let (gp, gy) = rotation_angles(a.gimbal.rotation());
        a.samples.push(UavSample {
            position: a.state.position,
            velocity: a.state.velocity,
            velocity_cmd: a.velocity_cmd,
            accel_cmd,
            gimbal_pitch: gp,
            gimbal_yaw: gy,
        });
    }
}

fn plan_accel(plan: &PlannedTrajectory, t: f64) -> Vec3 {
    if t < plan.stamp_start - 1e-9 || t >= plan.end_time() - 1e-9 {
        return Vec3::zeros();
    }
    let k = (((t - plan.stamp_start) / plan.dt + 1e-9).floor() as usize).min(plan.controls.len() - 1);
    plan.controls[k].acceleration
}

fn safety_check(scenario: &Scenario, agents: &[Agent]) -> Option<String> {
    for a in agents {
        let p = a.state.position;
        for (zi, z) in scenario.zones.iter().enumerate() {
            let d = z.exact_distance(p.x, p.y);
            if d < 0.0 {
                return Some(format!("{} inside no-fly zone {zi} (depth {:.3} m)", a.cfg.spec.id, -d));
            }
        }
    }
    for (i, a) in agents.iter().enumerate() {
        for b in &agents[i + 1..] {
            let d = (a.state.position - b.state.position).norm();
            let limit = 0.5 * a.cfg.planner.bounds.r_col.min(b.cfg.planner.bounds.r_col);
            if d < limit {
                return Some(format!(
                    "{} and {} are {d:.3} m apart (limit {limit:.3} m)",
                    a.cfg.spec.id, b.cfg.spec.id
                ));
            }
        }
    }
    None
}
