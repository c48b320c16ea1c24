//! Priority-ordered planning rounds and plan exchange over a simulated bus.
//!
//! Within a round UAVs solve in priority order. Each one treats the latest
//! delivered plans of all higher-priority teammates as moving obstacles (and,
//! optionally, as bodies to keep out of its camera cone). Lower-priority UAVs
//! are ignored entirely, so visibility is only guaranteed in one direction.

use std::io::Write;
use std::path::Path;

use crate::dynamics::{step_rk4, ControlInput, UavState};
use crate::nlp::{kkt_audit, solve, KktReport, Nlp, SolveOptions, SolveResult, SolveStatus};
use crate::ocp::{build, NeighborTrack, OcpProblem};
use crate::{Error, Result, Vec3};

/// Time-stamped plan; waypoint `k` is valid at `stamp_start + k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrajectory {
    pub uav_id: String,
    pub stamp_start: f64,
    pub dt: f64,
    pub states: Vec<UavState>,
    pub controls: Vec<ControlInput>,
}

impl PlannedTrajectory {
    /// Rolls `controls` forward from `x0`, so states and controls agree exactly.
    pub fn from_controls(
        uav_id: &str,
        stamp_start: f64,
        dt: f64,
        x0: UavState,
        controls: Vec<ControlInput>,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0);
        for u in &controls {
            let next = step_rk4(states.last().unwrap(), u, dt)?;
            states.push(next);
        }
        let plan = Self {
            uav_id: uav_id.to_string(),
            stamp_start,
            dt,
            states,
            controls,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.stamp_start.is_finite() {
            return Err(Error::InvalidArgument(format!("plan {} has bad timing", self.uav_id)));
        }
        if self.controls.is_empty() || self.states.len() != self.controls.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "plan {} has {} states for {} controls",
                self.uav_id,
                self.states.len(),
                self.controls.len()
            )));
        }
        for (k, u) in self.controls.iter().enumerate() {
            let next = step_rk4(&self.states[k], u, self.dt)?;
            let err = (next.position - self.states[k + 1].position)
                .amax()
                .max((next.velocity - self.states[k + 1].velocity).amax());
            if err > 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "plan {} inconsistent with its controls at step {k} ({err:e})",
                    self.uav_id
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn end_time(&self) -> f64 {
        self.stamp_start + self.dt * self.controls.len() as f64
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.stamp_start + self.dt * k as f64
    }

    /// State at time `t`. Inside the plan the double integrator is evaluated
    /// exactly; outside it the nearest end state is extrapolated at constant
    /// velocity.
    pub fn state_at(&self, t: f64) -> UavState {
        let n = self.controls.len();
        if t <= self.stamp_start {
            let s = self.states[0];
            return UavState::new(s.position + s.velocity * (t - self.stamp_start), s.velocity);
        }
        if t >= self.end_time() {
            let s = self.states[n];
            return UavState::new(s.position + s.velocity * (t - self.end_time()), s.velocity);
        }
        let k = (((t - self.stamp_start) / self.dt).floor() as usize).min(n - 1);
        let tau = t - self.time_of(k);
        let (s, a) = (self.states[k], self.controls[k].acceleration);
        UavState::new(
            s.position + s.velocity * tau + 0.5 * a * tau * tau,
            s.velocity + a * tau,
        )
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        self.state_at(t).position
    }

    /// Positions at `t0 + k·dt` for `k = 0..=n`.
    pub fn sample_positions(&self, t0: f64, dt: f64, n: usize) -> Vec<Vec3> {
        (0..=n).map(|k| self.position_at(t0 + dt * k as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanBusMessage {
    pub trajectory: PlannedTrajectory,
    pub send_time: f64,
    pub deliver_time: f64,
}

/// Broadcast channel with a constant delivery delay.
#[derive(Debug, Clone, Default)]
pub struct PlanBus {
    delay: f64,
    messages: Vec<PlanBusMessage>,
}

impl PlanBus {
    pub fn new(delay: f64) -> Result<Self> {
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(Error::InvalidArgument(format!("bus delay must be >= 0, got {delay}")));
        }
        Ok(Self {
            delay,
            messages: Vec::new(),
        })
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn publish(&mut self, trajectory: PlannedTrajectory, send_time: f64) {
        // only the newest message per sender can ever be returned again once a
        // later one has been delivered, so older delivered ones are dropped
        let id = trajectory.uav_id.clone();
        let latest_delivered = self
            .messages
            .iter()
            .filter(|m| m.trajectory.uav_id == id && m.deliver_time <= send_time)
            .map(|m| m.send_time)
            .fold(f64::NEG_INFINITY, f64::max);
        self.messages
            .retain(|m| m.trajectory.uav_id != id || m.send_time >= latest_delivered);
        self.messages.push(PlanBusMessage {
            trajectory,
            send_time,
            deliver_time: send_time + self.delay,
        });
    }

    /// Most recently sent plan of `uav_id` that has been delivered by `query_time`.
    pub fn latest_plan(&self, uav_id: &str, query_time: f64) -> Option<&PlannedTrajectory> {
        let mut best: Option<&PlanBusMessage> = None;
        for m in &self.messages {
            if m.trajectory.uav_id == uav_id
                && m.deliver_time <= query_time + 1e-9
                && best.is_none_or(|b| m.send_time >= b.send_time)
            {
                best = Some(m);
            }
        }
        best.map(|m| &m.trajectory)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// One row of the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub uav_id: String,
    pub event: String,
    pub status: String,
    pub wall_time: f64,
    pub cost: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub detail: String,
}

impl Event {
    pub fn note(time: f64, uav_id: &str, event: &str, detail: impl Into<String>) -> Self {
        Self {
            time,
            uav_id: uav_id.to_string(),
            event: event.to_string(),
            status: String::new(),
            wall_time: 0.0,
            cost: f64::NAN,
            max_violation: f64::NAN,
            iterations: 0,
            detail: detail.into(),
        }
    }
}

pub const EVENT_COLUMNS: [&str; 9] = [
    "time",
    "uav_id",
    "event",
    "status",
    "wall_time",
    "cost",
    "max_violation",
    "iterations",
    "detail",
];

/// Append-only event log. With `deterministic` set, wall-clock fields are
/// written as zero so that output files are reproducible byte for byte.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub deterministic: bool,
}

impl EventLog {
    pub fn new(deterministic: bool) -> Self {
        Self {
            events: Vec::new(),
            deterministic,
        }
    }

    pub fn push(&mut self, mut e: Event) {
        if self.deterministic {
            e.wall_time = 0.0;
        }
        self.events.push(e);
    }

    pub fn iter_kind<'a>(&'a self, event: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.event == event)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(EVENT_COLUMNS)?;
        for e in &self.events {
            out.write_record([
                format!("{:.3}", e.time),
                e.uav_id.clone(),
                e.event.clone(),
                e.status.clone(),
                format!("{:.6}", e.wall_time),
                fmt_num(e.cost),
                fmt_num(e.max_violation),
                e.iterations.to_string(),
                e.detail.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6e}")
    } else {
        String::new()
    }
}

/// Everything one UAV needs to plan in a round.
#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub uav_id: String,
    pub priority: u32,
    /// Problem without teammates; the round adds them.
    pub problem: OcpProblem,
    /// Last accepted plan, used to warm start.
    pub previous: Option<PlannedTrajectory>,
    /// Solver settings; the initial and recovery guesses are overwritten.
    pub options: SolveOptions,
    /// Skip the solver and report a failure (fault injection).
    pub force_failure: bool,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub uav_id: String,
    pub result: SolveResult,
    /// Published plan, present only for converged solves.
    pub plan: Option<PlannedTrajectory>,
    /// Age of each teammate plan used as a constraint.
    pub neighbor_ages: Vec<(String, f64)>,
    pub warm_started: bool,
    /// Optimality re-evaluated from the problem, for converged solves only.
    pub audit: Option<KktReport>,
}

impl PlanOutcome {
    pub fn accepted(&self) -> bool {
        self.plan.is_some()
    }
}

/// Team member identity used to look up plans on the bus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RosterEntry {
    pub uav_id: String,
    pub priority: u32,
}

/// Runs one planning round at simulated time `now`. `requests` must be sorted
/// by strictly increasing priority value (1 = highest priority). `roster` lists
/// the whole team; every member with a higher priority than a requester
/// constrains it through its latest delivered plan, including plans published
/// earlier in this same round when the bus delay is zero.
pub fn planning_round(
    requests: &[PlanRequest],
    roster: &[RosterEntry],
    bus: &mut PlanBus,
    now: f64,
    log: &mut EventLog,
) -> Result<Vec<PlanOutcome>> {
    if requests.windows(2).any(|w| w[0].priority >= w[1].priority) {
        return Err(Error::InvalidArgument(
            "planning round requests must be in strict priority order".into(),
        ));
    }
    let mut higher: Vec<&RosterEntry> = roster.iter().collect();
    higher.sort_by_key(|r| r.priority);
    let mut outcomes = Vec::with_capacity(requests.len());
    for req in requests {
        let mut problem = req.problem.clone();
        let n = problem.horizon;
        let mut ages = Vec::new();
        problem.neighbors.clear();
        for mate in higher.iter().take_while(|r| r.priority < req.priority) {
            if let Some(plan) = bus.latest_plan(&mate.uav_id, now) {
                ages.push((mate.uav_id.clone(), now - plan.stamp_start));
                problem.neighbors.push(NeighborTrack {
                    label: mate.uav_id.clone(),
                    positions: plan.sample_positions(now, problem.dt, n),
                });
            }
        }
        let outcome = plan_one(req, problem, ages, now)?;
        log.push(solve_event(now, &outcome));
        if let Some(plan) = &outcome.plan {
            bus.publish(plan.clone(), now);
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

fn plan_one(
    req: &PlanRequest,
    problem: OcpProblem,
    neighbor_ages: Vec<(String, f64)>,
    now: f64,
) -> Result<PlanOutcome> {
    let dt = problem.dt;
    let x0 = problem.initial_state;
    let nlp = build(problem)?;
    if req.force_failure {
        let z = nlp.hover_guess();
        let result = SolveResult::failed(SolveStatus::NumericFailure, z, nlp.num_constraints());
        return Ok(PlanOutcome {
            uav_id: req.uav_id.clone(),
            result,
            plan: None,
            neighbor_ages,
            warm_started: false,
            audit: None,
        });
    }
    let hover = nlp.hover_guess();
    let (guess, warm_started) = match &req.previous {
        Some(prev) if (prev.dt - dt).abs() < 1e-12 && now >= prev.stamp_start => {
            let shift = ((now - prev.stamp_start) / dt).round() as usize;
            (
                nlp.shifted_guess(&prev.states, &prev.controls, shift),
                shift < prev.controls.len(),
            )
        }
        _ => (hover.clone(), false),
    };
    let opts = SolveOptions {
        initial_guess: guess,
        recovery_guess: Some(hover),
        ..req.options.clone()
    };
    let result = solve(&nlp, &opts);
    let (plan, audit) = if result.status == SolveStatus::Converged {
        let plan = PlannedTrajectory::from_controls(&req.uav_id, now, dt, x0, nlp.controls(&result.z))?;
        (Some(plan), Some(kkt_audit(&nlp, &result.z, &result.multipliers)))
    } else {
        (None, None)
    };
    Ok(PlanOutcome {
        uav_id: req.uav_id.clone(),
        result,
        plan,
        neighbor_ages,
        warm_started,
        audit,
    })
}

fn solve_event(now: f64, o: &PlanOutcome) -> Event {
    let r = &o.result;
    let mut detail: Vec<String> = o
        .neighbor_ages
        .iter()
        .map(|(id, age)| format!("{id} age {age:.2}s"))
        .collect();
    if o.warm_started {
        detail.push("warm".into());
    }
    if r.used_recovery {
        detail.push("recovered".into());
    }
    Event {
        time: now,
        uav_id: o.uav_id.clone(),
        event: "solve".into(),
        status: r.status.as_str().into(),
        wall_time: r.wall_time.as_secs_f64(),
        cost: r.cost,
        max_violation: r.constraint_violation,
        iterations: r.iterations,
        detail: detail.join("; "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::PlannerWeights;
    use crate::shots::{DesiredState, TargetSample};

    fn straight_plan(id: &str, t0: f64, p0: Vec3, v: Vec3, n: usize) -> PlannedTrajectory {
        PlannedTrajectory::from_controls(id, t0, 0.1, UavState::new(p0, v), vec![ControlInput::zero(); n]).unwrap()
    }

    #[test]
    fn empty_bus_returns_none() {
        let bus = PlanBus::new(0.0).unwrap();
        assert!(bus.latest_plan("a", 10.0).is_none());
    }

    #[test]
    fn delayed_message_not_yet_delivered() {
        let mut bus = PlanBus::new(0.2).unwrap();
        bus.publish(straight_plan("a", 1.0, Vec3::zeros(), Vec3::x(), 5), 1.0);
        assert!(bus.latest_plan("a", 1.1).is_none());
        assert!(bus.latest_plan("a", 1.2).is_some());
    }

    #[test]
    fn later_delivered_message_wins() {
        let mut bus = PlanBus::new(0.0).unwrap();
        bus.publish(straight_plan("a", 1.0, Vec3::zeros(), Vec3::x(), 5), 1.0);
        bus.publish(straight_plan("a", 2.0, Vec3::zeros(), Vec3::y(), 5), 2.0);
        assert_eq!(bus.latest_plan("a", 1.5).unwrap().stamp_start, 1.0);
        assert_eq!(bus.latest_plan("a", 2.5).unwrap().stamp_start, 2.0);
        assert!(bus.latest_plan("b", 2.5).is_none());
    }

    #[test]
    fn stale_plan_extrapolates_at_constant_velocity() {
        let plan = straight_plan("a", 0.0, Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0), 10);
        assert!((plan.position_at(0.55) - Vec3::new(1.1, 0.0, 0.0)).norm() < 1e-12);
        assert!((plan.position_at(3.0) - Vec3::new(6.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn state_at_matches_rk4_between_waypoints() {
        let x0 = UavState::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.5, 0.0, -0.2));
        let controls = vec![ControlInput::new(Vec3::new(0.3, -1.0, 0.1)); 4];
        let plan = PlannedTrajectory::from_controls("a", 5.0, 0.1, x0, controls.clone()).unwrap();
        let mid = step_rk4(&plan.states[2], &controls[2], 0.04).unwrap();
        let s = plan.state_at(5.24);
        assert!((s.position - mid.position).norm() < 1e-12);
        assert!((s.velocity - mid.velocity).norm() < 1e-12);
    }

    #[test]
    fn inconsistent_plan_rejected() {
        let mut plan = straight_plan("a", 0.0, Vec3::zeros(), Vec3::x(), 3);
        plan.states[2].position.x += 1e-6;
        assert!(plan.validate().is_err());
    }

    fn request(id: &str, priority: u32, p0: Vec3, goal: Vec3, n: usize) -> PlanRequest {
        let target = vec![
            TargetSample {
                position: Vec3::new(0.0, 30.0, 0.0),
                velocity: Vec3::zeros(),
            };
            n + 1
        ];
        let desired = DesiredState {
            position: goal,
            velocity: Vec3::zeros(),
        };
        let mut problem = OcpProblem::new(UavState::new(p0, Vec3::zeros()), n, 0.1, desired, target);
        problem.weights = PlannerWeights {
            w1: 1.0,
            w2: 0.0,
            w3: 0.0,
            w4: 10.0,
        };
        problem.bounds.psi_min = -std::f64::consts::PI;
        problem.bounds.psi_max = std::f64::consts::PI;
        problem.bounds.theta_min = -10.0;
        problem.bounds.theta_max = 10.0;
        problem.visibility_enabled = false;
        PlanRequest {
            uav_id: id.into(),
            priority,
            problem,
            previous: None,
            options: SolveOptions::default(),
            force_failure: false,
        }
    }

    fn roster(reqs: &[PlanRequest]) -> Vec<RosterEntry> {
        reqs.iter()
            .map(|r| RosterEntry {
                uav_id: r.uav_id.clone(),
                priority: r.priority,
            })
            .collect()
    }

    #[test]
    fn idle_teammate_still_constrains_lower_priority() {
        let mut bus = PlanBus::new(0.0).unwrap();
        let mut log = EventLog::new(true);
        let mate = PlannedTrajectory::from_controls(
            "lead",
            0.0,
            0.1,
            UavState::new(Vec3::new(1.0, 0.0, 3.0), Vec3::zeros()),
            vec![ControlInput::zero(); 10],
        )
        .unwrap();
        bus.publish(mate, 0.0);
        let req = request("b", 2, Vec3::new(0.0, 0.0, 3.0), Vec3::new(2.0, 0.0, 3.0), 10);
        let mut team = roster(std::slice::from_ref(&req));
        team.push(RosterEntry {
            uav_id: "lead".into(),
            priority: 1,
        });
        let out = planning_round(&[req], &team, &mut bus, 0.5, &mut log).unwrap();
        assert_eq!(out[0].neighbor_ages, vec![("lead".to_string(), 0.5)]);
    }

    #[test]
    fn single_uav_round_has_no_teammate_rows() {
        let mut bus = PlanBus::new(0.0).unwrap();
        let mut log = EventLog::new(true);
        let reqs = [request("a", 1, Vec3::new(0.0, 0.0, 3.0), Vec3::new(2.0, 0.0, 3.0), 20)];
        let out = planning_round(&reqs, &roster(&reqs), &mut bus, 0.0, &mut log).unwrap();
        assert!(out[0].accepted());
        assert!(out[0].neighbor_ages.is_empty());
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.events[0].wall_time, 0.0);
        assert!(bus.latest_plan("a", 0.0).is_some());
    }

    #[test]
    fn head_on_crossing_keeps_separation() {
        let n = 40;
        let mut bus = PlanBus::new(0.0).unwrap();
        let mut log = EventLog::new(true);
        let reqs = [
            request("a", 1, Vec3::new(-4.0, 0.0, 3.0), Vec3::new(4.0, 0.0, 3.0), n),
            request("b", 2, Vec3::new(4.0, 0.05, 3.0), Vec3::new(-4.0, 0.05, 3.0), n),
        ];
        let out = planning_round(&reqs, &roster(&reqs), &mut bus, 0.0, &mut log).unwrap();
        assert!(
            out.iter().all(|o| o.accepted()),
            "{:?}",
            out.iter().map(|o| o.result.status).collect::<Vec<_>>()
        );
        let (a, b) = (out[0].plan.as_ref().unwrap(), out[1].plan.as_ref().unwrap());
        let r_col = reqs[0].problem.bounds.r_col;
        for k in 0..=n {
            let d = (a.states[k].position - b.states[k].position).norm();
            assert!(d >= r_col - 1e-3, "step {k}: {d}");
        }
        // round order follows priority
        let order: Vec<&str> = log.iter_kind("solve").map(|e| e.uav_id.as_str()).collect();
        assert_eq!(order, ["a", "b"]);
        assert_eq!(out[1].neighbor_ages, vec![("a".to_string(), 0.0)]);
    }

    #[test]
    fn forced_failure_publishes_nothing() {
        let mut bus = PlanBus::new(0.0).unwrap();
        let mut log = EventLog::new(true);
        let mut req = request("a", 1, Vec3::new(0.0, 0.0, 3.0), Vec3::new(2.0, 0.0, 3.0), 10);
        req.force_failure = true;
        let out = planning_round(&[req.clone()], &roster(&[req]), &mut bus, 0.0, &mut log).unwrap();
        assert!(!out[0].accepted());
        assert!(bus.is_empty());
        assert_eq!(log.events[0].status, "numeric_failure");
    }

    #[test]
    fn unordered_requests_rejected() {
        let mut bus = PlanBus::new(0.0).unwrap();
        let mut log = EventLog::new(true);
        let p = Vec3::new(0.0, 0.0, 3.0);
        let reqs = [request("a", 2, p, p, 5), request("b", 1, p, p, 5)];
        assert!(planning_round(&reqs, &roster(&reqs), &mut bus, 0.0, &mut log).is_err());
    }

    #[test]
    fn csv_has_fixed_header() {
        let mut log = EventLog::new(false);
        log.push(Event::note(1.5, "a", "fallback", "hover"));
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,uav_id,event,status,wall_time,cost,max_violation,iterations,detail\n"));
        assert!(text.contains("1.500,a,fallback,,0.000000,,,0,hover"));
    }
}
