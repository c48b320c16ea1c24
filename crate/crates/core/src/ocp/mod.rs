//! Per-UAV trajectory optimization problem and its multiple-shooting
//! transcription.
//!
//! Decision vector: `z = [x_0, .., x_N, u_0, .., u_{N-1}]` with
//! `x_k = [p; v]` (6 scalars) and `u_k = a` (3 scalars).
//!
//! Residual rows, in this fixed order:
//!
//! 1. equalities: `x_0 - x'` (6 rows), then `x_{k+1} - RK4(x_k, u_k)` for
//!    `k = 0..N-1` (6 rows each);
//! 2. no-fly zones, zone-major then `k = 0..=N`: signed distance minus margin;
//! 3. collisions, neighbors in priority order then dynamic obstacles, each for
//!    `k = 0..=N`: `|p_k - p_O,k|² - r²`;
//! 4. camera pitch, per `k = 0..=N`: `θ - θ_min`, `θ_max - θ`;
//! 5. relative gimbal yaw, per `k = 0..=N`: `w (ψ - ψ_min)`, `w (ψ_max - ψ)`
//!    with the speed gate `w` of [`terms::speed_gate`];
//! 6. mutual visibility (if enabled), neighbor-major then `k = 0..=N`:
//!    `cos α - margin - cos β`.
//!
//! Inequalities are `>= 0`. Rows at `k = 0` depend only on the fixed initial
//! state; when that state already violates one of them the row is shifted by
//! the initial violation so that the problem stays feasible. Zone rows are
//! shifted at every step by the violation of their zone at `k = 0`; other
//! rows by a share of their `k = 0` violation that decreases linearly to zero
//! over [`RECOVERY_TIME`].

pub mod terms;
mod zones;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, UavState};
use crate::nlp::{Nlp, SparseMatrix};
use crate::shots::{DesiredState, TargetSample};
use crate::{Error, Result, Vec3};

pub use zones::{NoFlyZone, POLYGON_SHARPNESS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerWeights {
    /// Acceleration effort.
    pub w1: f64,
    /// Camera pitch rate.
    pub w2: f64,
    /// Relative gimbal yaw rate.
    pub w3: f64,
    /// Terminal state error.
    pub w4: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 100.0,
            w3: 0.0,
            w4: 1.0,
        }
    }
}

impl PlannerWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w1, self.w2, self.w3, self.w4];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weights must be finite and nonnegative: {w:?}"
            )));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidArgument("all weights are zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerBounds {
    pub v_min: Vec3,
    pub v_max: Vec3,
    pub u_min: Vec3,
    pub u_max: Vec3,
    pub theta_min: f64,
    pub theta_max: f64,
    pub psi_min: f64,
    pub psi_max: f64,
    /// Camera field-of-view semi-cone angle.
    pub alpha: f64,
    pub r_col: f64,
    /// Optional altitude floor/ceiling on planned positions for `k >= 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
}

impl Default for PlannerBounds {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};
        Self {
            v_min: Vec3::repeat(-10.0),
            v_max: Vec3::repeat(10.0),
            u_min: Vec3::repeat(-5.0),
            u_max: Vec3::repeat(5.0),
            theta_min: -FRAC_PI_2,
            theta_max: -FRAC_PI_4,
            psi_min: -3.0 * FRAC_PI_4,
            psi_max: 3.0 * FRAC_PI_4,
            alpha: FRAC_PI_6,
            r_col: 2.0,
            z_min: None,
            z_max: None,
        }
    }
}

impl PlannerBounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.v_min[i] < self.v_max[i]) || !(self.u_min[i] < self.u_max[i]) {
                return Err(Error::InvalidArgument(
                    "velocity/acceleration bounds need min < max".into(),
                ));
            }
        }
        if !(self.theta_min < self.theta_max) || !(self.psi_min < self.psi_max) {
            return Err(Error::InvalidArgument("gimbal bounds need min < max".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in (0, π/2), got {}",
                self.alpha
            )));
        }
        if let (Some(lo), Some(hi)) = (self.z_min, self.z_max) {
            if !(lo < hi) {
                return Err(Error::InvalidArgument("altitude bounds need z_min < z_max".into()));
            }
        }
        if !(self.r_col > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "r_col must be positive, got {}",
                self.r_col
            )));
        }
        Ok(())
    }
}

/// Extra clearance the planner keeps beyond the nominal constraints, to absorb
/// tracking error during execution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintMargins {
    /// Meters added to every no-fly zone.
    pub zone: f64,
    /// Meters added to every collision radius.
    pub collision: f64,
    /// Subtracted from `cos α`.
    pub visibility: f64,
}

/// Predicted positions of a teammate, one per planning step.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTrack {
    pub label: String,
    pub positions: Vec<Vec3>,
}

/// Predicted positions of an obstacle that is not a teammate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTrack {
    pub label: String,
    pub positions: Vec<Vec3>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpProblem {
    pub initial_state: UavState,
    pub horizon: usize,
    pub dt: f64,
    pub weights: PlannerWeights,
    pub bounds: PlannerBounds,
    pub desired: DesiredState,
    /// Predicted target states for `k = 0..=N`.
    pub target: Vec<TargetSample>,
    pub zones: Vec<NoFlyZone>,
    /// Higher-priority teammates, in priority order.
    pub neighbors: Vec<NeighborTrack>,
    pub obstacles: Vec<ObstacleTrack>,
    pub visibility_enabled: bool,
    pub margins: ConstraintMargins,
    /// Per-component weights of the terminal error `[p; v]`.
    pub terminal_scale: [f64; 6],
}

impl OcpProblem {
    /// Problem with no obstacles, default bounds and weights.
    pub fn new(
        initial_state: UavState,
        horizon: usize,
        dt: f64,
        desired: DesiredState,
        target: Vec<TargetSample>,
    ) -> Self {
        Self {
            initial_state,
            horizon,
            dt,
            weights: PlannerWeights::default(),
            bounds: PlannerBounds::default(),
            desired,
            target,
            zones: Vec::new(),
            neighbors: Vec::new(),
            obstacles: Vec::new(),
            visibility_enabled: true,
            margins: ConstraintMargins::default(),
            terminal_scale: [1.0; 6],
        }
    }
}

/// Which family a residual row belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowKind {
    Initial,
    Dynamics,
    Zone(usize),
    Collision(String),
    PitchMin,
    PitchMax,
    YawMin,
    YawMax,
    Visibility(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowInfo {
    pub kind: RowKind,
    pub step: usize,
    pub component: usize,
}

impl std::fmt::Display for RowInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const COMP: [&str; 6] = ["px", "py", "pz", "vx", "vy", "vz"];
        match &self.kind {
            RowKind::Initial => write!(f, "eq initial {}", COMP[self.component]),
            RowKind::Dynamics => write!(f, "eq dynamics k={} {}", self.step, COMP[self.component]),
            RowKind::Zone(z) => write!(f, "ineq zone[{z}] k={}", self.step),
            RowKind::Collision(l) => write!(f, "ineq collision[{l}] k={}", self.step),
            RowKind::PitchMin => write!(f, "ineq pitch_min k={}", self.step),
            RowKind::PitchMax => write!(f, "ineq pitch_max k={}", self.step),
            RowKind::YawMin => write!(f, "ineq yaw_min k={}", self.step),
            RowKind::YawMax => write!(f, "ineq yaw_max k={}", self.step),
            RowKind::Visibility(l) => write!(f, "ineq visibility[{l}] k={}", self.step),
        }
    }
}

/// The transcribed problem, ready for [`crate::nlp::solve`].
#[derive(Debug, Clone)]
pub struct TranscribedNlp {
    problem: OcpProblem,
    rows: Vec<RowInfo>,
    num_eq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Per inequality row, the initial violation subtracted from it (≤ 0).
    relax: Vec<f64>,
}

/// Time over which an initially violated non-zone constraint must recover (s).
pub const RECOVERY_TIME: f64 = 1.0;

#[inline]
fn v3(z: &[f64], i: usize) -> Vec3 {
    Vec3::new(z[i], z[i + 1], z[i + 2])
}

/// Validates `problem` and lays out variables, bounds and rows.
pub fn build(problem: OcpProblem) -> Result<TranscribedNlp> {
    let n = problem.horizon;
    if n == 0 {
        return Err(Error::Build("horizon must be at least one step".into()));
    }
    if !(problem.dt > 0.0 && problem.dt.is_finite()) {
        return Err(Error::Build(format!("dt must be positive, got {}", problem.dt)));
    }
    if !problem.initial_state.is_finite() {
        return Err(Error::Build("initial state is not finite".into()));
    }
    if problem.target.len() < n + 1 {
        return Err(Error::Build(format!(
            "target prediction has {} samples, need {}",
            problem.target.len(),
            n + 1
        )));
    }
    for nb in &problem.neighbors {
        if nb.positions.len() < n + 1 {
            return Err(Error::Build(format!(
                "neighbor {} has {} positions, need {}",
                nb.label,
                nb.positions.len(),
                n + 1
            )));
        }
    }
    for ob in &problem.obstacles {
        if ob.positions.len() < n + 1 || !(ob.radius > 0.0) {
            return Err(Error::Build(format!("obstacle {} is malformed", ob.label)));
        }
    }
    problem.weights.validate().map_err(|e| Error::Build(e.to_string()))?;
    problem.bounds.validate().map_err(|e| Error::Build(e.to_string()))?;
    for z in &problem.zones {
        z.validate().map_err(|e| Error::Build(e.to_string()))?;
    }
    if problem.terminal_scale.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Build("terminal scale must be nonnegative".into()));
    }

    let mut rows = Vec::new();
    for c in 0..6 {
        rows.push(RowInfo {
            kind: RowKind::Initial,
            step: 0,
            component: c,
        });
    }
    for k in 0..n {
        for c in 0..6 {
            rows.push(RowInfo {
                kind: RowKind::Dynamics,
                step: k,
                component: c,
            });
        }
    }
    let num_eq = rows.len();
    let per_step = |rows: &mut Vec<RowInfo>, kind: RowKind| {
        for k in 0..=n {
            rows.push(RowInfo {
                kind: kind.clone(),
                step: k,
                component: 0,
            });
        }
    };
    for zi in 0..problem.zones.len() {
        per_step(&mut rows, RowKind::Zone(zi));
    }
    for nb in &problem.neighbors {
        per_step(&mut rows, RowKind::Collision(nb.label.clone()));
    }
    for ob in &problem.obstacles {
        per_step(&mut rows, RowKind::Collision(ob.label.clone()));
    }
    for k in 0..=n {
        for kind in [RowKind::PitchMin, RowKind::PitchMax] {
            rows.push(RowInfo {
                kind,
                step: k,
                component: 0,
            });
        }
    }
    for k in 0..=n {
        for kind in [RowKind::YawMin, RowKind::YawMax] {
            rows.push(RowInfo {
                kind,
                step: k,
                component: 0,
            });
        }
    }
    if problem.visibility_enabled {
        for nb in &problem.neighbors {
            per_step(&mut rows, RowKind::Visibility(nb.label.clone()));
        }
    }

    let nvars = 9 * n + 6;
    let mut lower = vec![f64::NEG_INFINITY; nvars];
    let mut upper = vec![f64::INFINITY; nvars];
    let b = &problem.bounds;
    for k in 1..=n {
        for i in 0..3 {
            lower[6 * k + 3 + i] = b.v_min[i];
            upper[6 * k + 3 + i] = b.v_max[i];
        }
        if let Some(z) = b.z_min {
            lower[6 * k + 2] = z;
        }
        if let Some(z) = b.z_max {
            upper[6 * k + 2] = z;
        }
    }
    for k in 0..n {
        for i in 0..3 {
            lower[6 * (n + 1) + 3 * k + i] = b.u_min[i];
            upper[6 * (n + 1) + 3 * k + i] = b.u_max[i];
        }
    }

    let num_ineq = rows.len() - num_eq;
    let mut nlp = TranscribedNlp {
        problem,
        rows,
        num_eq,
        lower,
        upper,
        relax: vec![0.0; num_ineq],
    };
    let probe = nlp.hover_guess();
    let mut res = vec![0.0; nlp.rows.len()];
    nlp.eval_constraints(&probe, &mut res, None);
    let initial: Vec<(RowKind, f64)> = nlp.rows[num_eq..]
        .iter()
        .enumerate()
        .filter(|(_, info)| info.step == 0)
        .map(|(j, info)| (info.kind.clone(), res[num_eq + j].min(0.0)))
        .collect();
    // A static zone already violated at x' is relaxed at every step, so the
    // plan may not go deeper but hovering stays feasible. Other rows recover
    // linearly within RECOVERY_TIME.
    let recovery_steps = (RECOVERY_TIME / nlp.problem.dt).ceil().max(1.0);
    for (j, info) in nlp.rows[num_eq..].iter().enumerate() {
        let r0 = initial
            .iter()
            .find(|(kind, _)| *kind == info.kind)
            .map_or(0.0, |(_, r)| *r);
        nlp.relax[j] = match info.kind {
            RowKind::Zone(_) => r0,
            _ => r0 * (1.0 - info.step as f64 / recovery_steps).max(0.0),
        };
    }
    Ok(nlp)
}

impl TranscribedNlp {
    pub fn problem(&self) -> &OcpProblem {
        &self.problem
    }

    pub fn horizon(&self) -> usize {
        self.problem.horizon
    }

    pub fn rows(&self) -> &[RowInfo] {
        &self.rows
    }

    /// One label per residual row, in row order.
    pub fn row_labels(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.to_string()).collect()
    }

    /// Initial violations absorbed by the `k = 0` inequality rows.
    pub fn initial_relaxation(&self) -> &[f64] {
        &self.relax
    }

    /// Number of finite variable bounds (lower and upper counted separately).
    pub fn num_box_rows(&self) -> usize {
        self.lower.iter().chain(&self.upper).filter(|b| b.is_finite()).count()
    }

    #[inline]
    fn x_index(&self, k: usize) -> usize {
        6 * k
    }

    #[inline]
    fn u_index(&self, k: usize) -> usize {
        6 * (self.problem.horizon + 1) + 3 * k
    }

    pub fn states(&self, z: &[f64]) -> Vec<UavState> {
        (0..=self.problem.horizon)
            .map(|k| UavState::from_slice(&z[self.x_index(k)..self.x_index(k) + 6]))
            .collect()
    }

    pub fn controls(&self, z: &[f64]) -> Vec<ControlInput> {
        (0..self.problem.horizon)
            .map(|k| ControlInput::new(v3(z, self.u_index(k))))
            .collect()
    }

    /// Packs a state/control sequence; missing entries are filled by holding
    /// the last control at zero and rolling the dynamics forward.
    pub fn encode(&self, states: &[UavState], controls: &[ControlInput]) -> Vec<f64> {
        let n = self.problem.horizon;
        let mut z = vec![0.0; 9 * n + 6];
        let mut last = self.problem.initial_state;
        for k in 0..=n {
            let x = match states.get(k) {
                Some(s) => *s,
                None => UavState::new(last.position + last.velocity * self.problem.dt, last.velocity),
            };
            z[self.x_index(k)..self.x_index(k) + 6].copy_from_slice(&x.to_array());
            last = x;
        }
        for k in 0..n {
            let u = controls.get(k).map_or(Vec3::zeros(), |c| c.acceleration);
            z[self.u_index(k)..self.u_index(k) + 3].copy_from_slice(u.as_slice());
        }
        z
    }

    /// Initial state followed by hovering at the initial position.
    pub fn hover_guess(&self) -> Vec<f64> {
        let x0 = self.problem.initial_state;
        let hover = UavState::new(x0.position, Vec3::zeros());
        let mut states = vec![hover; self.problem.horizon + 1];
        states[0] = x0;
        self.encode(&states, &[])
    }

    /// Previous plan shifted forward by `shift` steps, with `x_0` replaced by
    /// the current state.
    pub fn shifted_guess(&self, states: &[UavState], controls: &[ControlInput], shift: usize) -> Vec<f64> {
        let mut s: Vec<UavState> = states.iter().skip(shift).copied().collect();
        let c: Vec<ControlInput> = controls.iter().skip(shift).copied().collect();
        if s.is_empty() {
            return self.hover_guess();
        }
        s[0] = self.problem.initial_state;
        self.encode(&s, &c)
    }

    fn target(&self, k: usize) -> &TargetSample {
        &self.problem.target[k]
    }

    /// Cost, optionally with gradient.
    fn eval_cost(&self, z: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let pr = &self.problem;
        let w = &pr.weights;
        let n = pr.horizon;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
        let mut cost = 0.0;
        for k in 0..n {
            let (xi, ui) = (self.x_index(k), self.u_index(k));
            let p = v3(z, xi);
            let v = v3(z, xi + 3);
            let u = v3(z, ui);
            cost += w.w1 * u.norm_squared();
            if let Some(g) = grad.as_deref_mut() {
                for i in 0..3 {
                    g[ui + i] += 2.0 * w.w1 * u[i];
                }
            }
            let t = self.target(k);
            let q = p - t.position;
            let rel_v = v - t.velocity;
            if w.w2 > 0.0 {
                let r = terms::pitch_rate(&q, &rel_v);
                cost += w.w2 * r.value * r.value;
                if let Some(g) = grad.as_deref_mut() {
                    let c = 2.0 * w.w2 * r.value;
                    for i in 0..3 {
                        g[xi + i] += c * r.d_p[i];
                        g[xi + 3 + i] += c * r.d_v[i];
                    }
                }
            }
            if w.w3 > 0.0 {
                let r = terms::relative_yaw_rate(&q, &rel_v, &v, &u);
                cost += w.w3 * r.value * r.value;
                if let Some(g) = grad.as_deref_mut() {
                    let c = 2.0 * w.w3 * r.value;
                    for i in 0..3 {
                        g[xi + i] += c * r.d_p[i];
                        g[xi + 3 + i] += c * r.d_v[i];
                        g[ui + i] += c * r.d_u[i];
                    }
                }
            }
        }
        let xn = self.x_index(n);
        let d = &pr.desired;
        let goal = [
            d.position.x,
            d.position.y,
            d.position.z,
            d.velocity.x,
            d.velocity.y,
            d.velocity.z,
        ];
        for i in 0..6 {
            let e = z[xn + i] - goal[i];
            cost += w.w4 * pr.terminal_scale[i] * e * e;
            if let Some(g) = grad.as_deref_mut() {
                g[xn + i] += 2.0 * w.w4 * pr.terminal_scale[i] * e;
            }
        }
        cost
    }

    fn eval_constraints(&self, z: &[f64], out: &mut [f64], mut jac: Option<&mut SparseMatrix>) {
        let pr = &self.problem;
        let n = pr.horizon;
        let dt = pr.dt;
        let nvars = 9 * n + 6;
        if let Some(j) = jac.as_deref_mut() {
            j.reset(self.rows.len(), nvars);
        }
        let mut row = 0;
        macro_rules! push {
            ($r:expr, $c:expr, $v:expr) => {
                if let Some(j) = jac.as_deref_mut() {
                    j.push($r, $c, $v);
                }
            };
        }

        let x0 = pr.initial_state.to_array();
        for c in 0..6 {
            out[row] = z[c] - x0[c];
            push!(row, c, 1.0);
            row += 1;
        }

        // The dynamics are linear, so the RK4 step has a constant Jacobian
        // equal to the exact discretization of the double integrator.
        for k in 0..n {
            let (xi, xn, ui) = (self.x_index(k), self.x_index(k + 1), self.u_index(k));
            let x = UavState::from_slice(&z[xi..xi + 6]);
            let next = rk4(&x, &v3(z, ui), dt);
            for c in 0..6 {
                out[row + c] = z[xn + c] - next[c];
            }
            for i in 0..3 {
                push!(row + i, xn + i, 1.0);
                push!(row + i, xi + i, -1.0);
                push!(row + i, xi + 3 + i, -dt);
                push!(row + i, ui + i, -0.5 * dt * dt);
                push!(row + 3 + i, xn + 3 + i, 1.0);
                push!(row + 3 + i, xi + 3 + i, -1.0);
                push!(row + 3 + i, ui + i, -dt);
            }
            row += 6;
        }

        let ineq0 = row;
        for zone in &pr.zones {
            for k in 0..=n {
                let xi = self.x_index(k);
                let (d, g) = zone.signed_distance(z[xi], z[xi + 1]);
                out[row] = d - pr.margins.zone;
                push!(row, xi, g[0]);
                push!(row, xi + 1, g[1]);
                row += 1;
            }
        }

        let radius_nb = pr.bounds.r_col + pr.margins.collision;
        let tracks = pr.neighbors.iter().map(|t| (&t.positions, radius_nb)).chain(
            pr.obstacles
                .iter()
                .map(|o| (&o.positions, o.radius + pr.margins.collision)),
        );
        for (positions, radius) in tracks {
            for k in 0..=n {
                let xi = self.x_index(k);
                let diff = v3(z, xi) - positions[k];
                out[row] = diff.norm_squared() - radius * radius;
                for i in 0..3 {
                    push!(row, xi + i, 2.0 * diff[i]);
                }
                row += 1;
            }
        }

        let b = &pr.bounds;
        for k in 0..=n {
            let xi = self.x_index(k);
            let q = v3(z, xi) - self.target(k).position;
            let t = terms::pitch_angle(&q);
            out[row] = t.value - b.theta_min;
            out[row + 1] = b.theta_max - t.value;
            for i in 0..3 {
                push!(row, xi + i, t.d_p[i]);
                push!(row + 1, xi + i, -t.d_p[i]);
            }
            row += 2;
        }
        for k in 0..=n {
            let xi = self.x_index(k);
            let q = v3(z, xi) - self.target(k).position;
            let v = v3(z, xi + 3);
            let t = terms::relative_yaw_angle(&q, &v);
            let gate = terms::speed_gate(&v);
            let (lo, hi) = (t.value - b.psi_min, b.psi_max - t.value);
            out[row] = gate.value * lo;
            out[row + 1] = gate.value * hi;
            for i in 0..2 {
                push!(row, xi + i, gate.value * t.d_p[i]);
                push!(row, xi + 3 + i, lo * gate.d_v[i] - gate.heading_d_v[i]);
                push!(row + 1, xi + i, -gate.value * t.d_p[i]);
                push!(row + 1, xi + 3 + i, hi * gate.d_v[i] + gate.heading_d_v[i]);
            }
            row += 2;
        }

        if pr.visibility_enabled {
            let cos_alpha = b.alpha.cos() - pr.margins.visibility;
            for nb in &pr.neighbors {
                for k in 0..=n {
                    let xi = self.x_index(k);
                    let p = v3(z, xi);
                    let q = p - self.target(k).position;
                    let d = p - nb.positions[k];
                    if d.norm() < 1e-6 || q.norm() < 1e-6 {
                        out[row] = 0.0;
                        for i in 0..3 {
                            push!(row, xi + i, 0.0);
                        }
                    } else {
                        let (c, dq, dd) = terms::cos_between(&q, &d);
                        out[row] = cos_alpha - c;
                        for i in 0..3 {
                            push!(row, xi + i, -(dq[i] + dd[i]));
                        }
                    }
                    row += 1;
                }
            }
        }
        debug_assert_eq!(row, self.rows.len());
        for (j, r) in self.relax.iter().enumerate() {
            out[ineq0 + j] -= r;
        }
    }
}

fn rk4(x: &UavState, a: &Vec3, dt: f64) -> [f64; 6] {
    let s0 = x.to_array();
    let f = |s: &[f64; 6]| -> [f64; 6] { [s[3], s[4], s[5], a.x, a.y, a.z] };
    let add = |s: &[f64; 6], k: &[f64; 6], h: f64| -> [f64; 6] { std::array::from_fn(|i| s[i] + h * k[i]) };
    let k1 = f(&s0);
    let k2 = f(&add(&s0, &k1, 0.5 * dt));
    let k3 = f(&add(&s0, &k2, 0.5 * dt));
    let k4 = f(&add(&s0, &k3, dt));
    std::array::from_fn(|i| s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

impl Nlp for TranscribedNlp {
    fn num_vars(&self) -> usize {
        9 * self.problem.horizon + 6
    }

    fn num_eq(&self) -> usize {
        self.num_eq
    }

    fn num_ineq(&self) -> usize {
        self.rows.len() - self.num_eq
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn cost(&self, z: &[f64]) -> f64 {
        self.eval_cost(z, None)
    }

    fn cost_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        self.eval_cost(z, Some(grad))
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        self.eval_constraints(z, out, None);
    }

    fn constraints_and_jacobian(&self, z: &[f64], out: &mut [f64], jac: &mut SparseMatrix) {
        self.eval_constraints(z, out, Some(jac));
    }

    /// Gauss-Newton model: every cost term is a weighted square.
    fn cost_hessian_approx(&self, z: &[f64], out: &mut Vec<(usize, usize, f64)>) -> bool {
        let pr = &self.problem;
        let w = &pr.weights;
        let n = pr.horizon;
        out.clear();
        for k in 0..n {
            let (xi, ui) = (self.x_index(k), self.u_index(k));
            let p = v3(z, xi);
            let v = v3(z, xi + 3);
            let u = v3(z, ui);
            let t = self.target(k);
            let q = p - t.position;
            let rel_v = v - t.velocity;
            let idx: [usize; 9] = std::array::from_fn(|i| if i < 6 { xi + i } else { ui + i - 6 });
            let mut gp = [0.0; 9];
            let mut gy = [0.0; 9];
            if w.w2 > 0.0 {
                let r = terms::pitch_rate(&q, &rel_v);
                for i in 0..3 {
                    gp[i] = r.d_p[i];
                    gp[3 + i] = r.d_v[i];
                }
            }
            if w.w3 > 0.0 {
                let r = terms::relative_yaw_rate(&q, &rel_v, &v, &u);
                for i in 0..3 {
                    gy[i] = r.d_p[i];
                    gy[3 + i] = r.d_v[i];
                    gy[6 + i] = r.d_u[i];
                }
            }
            for a in 0..9 {
                for bb in 0..=a {
                    let mut val = 2.0 * w.w2 * gp[a] * gp[bb] + 2.0 * w.w3 * gy[a] * gy[bb];
                    if a == bb && a >= 6 {
                        val += 2.0 * w.w1;
                    }
                    let (i, j) = (idx[a].max(idx[bb]), idx[a].min(idx[bb]));
                    out.push((i, j, val));
                }
            }
        }
        let xn = self.x_index(n);
        for i in 0..6 {
            out.push((xn + i, xn + i, 2.0 * w.w4 * pr.terminal_scale[i]));
        }
        true
    }
}

#[cfg(test)]
mod tests;
