use std::time::Instant;

use super::envelope::EnvelopeCholesky;
use super::{Nlp, SolveOptions, SolveResult, SolveStatus, SparseMatrix};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Solves `nlp` from `opts.initial_guess`, retrying once from
/// `opts.recovery_guess` if the first attempt does not converge.
pub fn solve(nlp: &dyn Nlp, opts: &SolveOptions) -> SolveResult {
    let start = Instant::now();
    let deadline = opts.max_wall_time.map(|d| start + d);
    let n = nlp.num_vars();
    assert_eq!(opts.initial_guess.len(), n, "initial guess has wrong length");

    let mut result = Attempt::new(
        nlp,
        opts,
        &opts.initial_guess,
        opts.initial_multipliers.as_deref(),
        deadline,
    )
    .run();
    if result.status != SolveStatus::Converged && result.status != SolveStatus::MaxTime {
        if let Some(guess) = &opts.recovery_guess {
            assert_eq!(guess.len(), n, "recovery guess has wrong length");
            let mut retry = Attempt::new(nlp, opts, guess, None, deadline).run();
            retry.iterations += result.iterations;
            retry.outer_iterations += result.outer_iterations;
            retry.used_recovery = true;
            let better = retry.status == SolveStatus::Converged
                || (retry.constraint_violation.is_finite()
                    && !(result.constraint_violation <= retry.constraint_violation));
            if better {
                result = retry;
            } else {
                result.iterations = retry.iterations;
                result.outer_iterations = retry.outer_iterations;
            }
        }
    }
    result.wall_time = start.elapsed();
    result
}

enum InnerOutcome {
    Converged,
    Stalled,
    IterationCap,
    Timeout,
    NonFinite,
}

struct Attempt<'a> {
    nlp: &'a dyn Nlp,
    opts: &'a SolveOptions,
    deadline: Option<Instant>,
    n: usize,
    me: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    row_scale: Vec<f64>,
    obj_scale: f64,
    /// scaled multipliers, residual order
    mult: Vec<f64>,
    rho: f64,
    z: Vec<f64>,
    // evaluation cache at `z`
    phi: f64,
    cost: f64,
    grad_f: Vec<f64>,
    grad: Vec<f64>,
    res: Vec<f64>,
    jac: SparseMatrix,
    hess: Vec<(usize, usize, f64)>,
    has_hess: bool,
    chol: EnvelopeCholesky,
    iterations: usize,
    failed_init: bool,
}

impl<'a> Attempt<'a> {
    fn new(
        nlp: &'a dyn Nlp,
        opts: &'a SolveOptions,
        guess: &[f64],
        multipliers: Option<&[f64]>,
        deadline: Option<Instant>,
    ) -> Self {
        let n = nlp.num_vars();
        let me = nlp.num_eq();
        let m = nlp.num_constraints();
        let lo = nlp.lower_bounds().to_vec();
        let hi = nlp.upper_bounds().to_vec();
        let z: Vec<f64> = guess.iter().enumerate().map(|(i, &v)| v.clamp(lo[i], hi[i])).collect();

        let mut grad_f = vec![0.0; n];
        let cost = nlp.cost_and_gradient(&z, &mut grad_f);
        let mut res = vec![0.0; m];
        let mut jac = SparseMatrix::new(m, n);
        nlp.constraints_and_jacobian(&z, &mut res, &mut jac);
        let mut hess = Vec::new();
        let has_hess = nlp.cost_hessian_approx(&z, &mut hess);

        let mut row_max = vec![0.0_f64; m];
        for (r, _, v) in jac.iter() {
            row_max[r] = row_max[r].max(v.abs());
        }
        let row_scale: Vec<f64> = row_max.iter().map(|&a| 1.0 / a.max(1.0)).collect();
        let gmax = grad_f.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
        let obj_scale = 1.0 / (gmax / 10.0).max(1.0);

        let mult = match multipliers {
            Some(raw) if raw.len() == m => (0..m)
                .map(|j| {
                    let v = raw[j] * obj_scale / row_scale[j];
                    if j >= me {
                        v.max(0.0)
                    } else {
                        v
                    }
                })
                .collect(),
            _ => vec![0.0; m],
        };

        // Envelope pattern: all column pairs of every constraint row plus the cost model.
        let mut pattern = Vec::new();
        for row in merged_rows(&jac) {
            for (a, &(ca, _)) in row.iter().enumerate() {
                for &(cb, _) in &row[..a] {
                    pattern.push((ca, cb));
                }
            }
        }
        pattern.extend(hess.iter().map(|&(i, j, _)| (i, j)));
        let chol = EnvelopeCholesky::new(n, pattern);

        let failed_init = !cost.is_finite() || res.iter().any(|r| !r.is_finite());
        let mut me_ = Self {
            nlp,
            opts,
            deadline,
            n,
            me,
            m,
            lo,
            hi,
            row_scale,
            obj_scale,
            mult,
            rho: opts.initial_penalty,
            z,
            phi: f64::NAN,
            cost,
            grad_f,
            grad: vec![0.0; n],
            res,
            jac,
            hess,
            has_hess,
            chol,
            iterations: 0,
            failed_init,
        };
        if !me_.failed_init {
            me_.phi = me_.merit_from_cache();
            me_.assemble_merit_gradient();
        }
        me_
    }

    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn ineq_term(&self, j: usize, r: f64) -> f64 {
        let g = self.row_scale[j] * r;
        let mu = self.mult[j];
        if self.rho * g - mu < 0.0 {
            -mu * g + 0.5 * self.rho * g * g
        } else {
            -mu * mu / (2.0 * self.rho)
        }
    }

    fn merit(&self, cost: f64, res: &[f64]) -> f64 {
        let mut phi = self.obj_scale * cost;
        for (j, &r) in res.iter().enumerate() {
            if j < self.me {
                let c = self.row_scale[j] * r;
                phi += -self.mult[j] * c + 0.5 * self.rho * c * c;
            } else {
                phi += self.ineq_term(j, r);
            }
        }
        phi
    }

    fn merit_from_cache(&self) -> f64 {
        self.merit(self.cost, &self.res)
    }

    /// Row weights `w` such that `∇Φ = σ∇f + Σ w_j ∇c_j`.
    fn row_weight(&self, j: usize) -> f64 {
        let s = self.row_scale[j];
        let c = s * self.res[j];
        let w = if j < self.me {
            self.rho * c - self.mult[j]
        } else {
            (self.rho * c - self.mult[j]).min(0.0)
        };
        w * s
    }

    fn assemble_merit_gradient(&mut self) {
        for i in 0..self.n {
            self.grad[i] = self.obj_scale * self.grad_f[i];
        }
        let weights: Vec<f64> = (0..self.m).map(|j| self.row_weight(j)).collect();
        for (r, c, v) in self.jac.iter() {
            self.grad[c] += weights[r] * v;
        }
    }

    fn evaluate_value(&self, z: &[f64], res: &mut [f64]) -> f64 {
        let cost = self.nlp.cost(z);
        self.nlp.constraints(z, res);
        if !cost.is_finite() || res.iter().any(|r| !r.is_finite()) {
            return f64::NAN;
        }
        self.merit(cost, res)
    }

    /// Moves to `z` and refreshes every cached quantity.
    fn move_to(&mut self, z: &[f64]) -> bool {
        self.z.copy_from_slice(z);
        self.cost = self.nlp.cost_and_gradient(&self.z, &mut self.grad_f);
        self.nlp.constraints_and_jacobian(&self.z, &mut self.res, &mut self.jac);
        self.hess.clear();
        self.has_hess = self.nlp.cost_hessian_approx(&self.z, &mut self.hess);
        self.phi = self.merit_from_cache();
        self.assemble_merit_gradient();
        self.phi.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }

    fn projected_gradient_norm(&self) -> f64 {
        let mut out = 0.0_f64;
        for i in 0..self.n {
            let step = (self.z[i] - self.grad[i]).clamp(self.lo[i], self.hi[i]) - self.z[i];
            out = out.max(step.abs());
        }
        out
    }

    fn fixed_set(&self) -> Vec<bool> {
        (0..self.n)
            .map(|i| (self.z[i] <= self.lo[i] && self.grad[i] > 0.0) || (self.z[i] >= self.hi[i] && self.grad[i] < 0.0))
            .collect()
    }

    /// Gauss-Newton model of the merit function restricted to free variables.
    fn factor_preconditioner(&mut self, fixed: &[bool]) -> bool {
        let rows = merged_rows(&self.jac);
        let mut shift = 0.0;
        for attempt in 0..8 {
            let mut ok = true;
            self.chol.clear();
            let mut maxdiag = 0.0_f64;
            'assemble: {
                if self.has_hess {
                    for k in 0..self.hess.len() {
                        let (i, j, v) = self.hess[k];
                        if fixed[i] || fixed[j] {
                            continue;
                        }
                        if !self.chol.add(i, j, self.obj_scale * v) {
                            ok = false;
                            break 'assemble;
                        }
                    }
                }
                for (j, row) in rows.iter().enumerate() {
                    let s = self.row_scale[j];
                    let active = j < self.me || self.rho * s * self.res[j] - self.mult[j] < 0.0;
                    if !active {
                        continue;
                    }
                    let w = self.rho * s * s;
                    for (a, &(ca, va)) in row.iter().enumerate() {
                        if fixed[ca] {
                            continue;
                        }
                        for &(cb, vb) in &row[..=a] {
                            if fixed[cb] {
                                continue;
                            }
                            if !self.chol.add(ca, cb, w * va * vb) {
                                ok = false;
                                break 'assemble;
                            }
                        }
                    }
                }
            }
            if !ok {
                // envelope grew; assemble again into the rebuilt storage
                continue;
            }
            for i in 0..self.n {
                maxdiag = maxdiag.max(self.chol.diagonal(i));
            }
            let base = if self.has_hess {
                1e-8 * maxdiag.max(1.0) + 1e-10
            } else {
                self.obj_scale.max(1e-8 * maxdiag)
            };
            let delta = base.max(shift);
            for i in 0..self.n {
                let v = if fixed[i] { 1.0 } else { delta };
                self.chol.add(i, i, v);
            }
            if self.chol.factor() {
                return true;
            }
            shift = if attempt == 0 {
                1e-6 * maxdiag.max(1.0)
            } else {
                shift * 100.0
            };
        }
        false
    }

    fn inner(&mut self, omega: f64) -> InnerOutcome {
        let mem = self.opts.lbfgs_memory.max(1);
        let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(mem);
        let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(mem);
        let n = self.n;
        let mut trial = vec![0.0; n];
        let mut trial_res = vec![0.0; self.m];
        let mut dir = vec![0.0; n];
        for _ in 0..self.opts.max_inner_iterations {
            if self.timed_out() {
                return InnerOutcome::Timeout;
            }
            let gscale = self.obj_scale * self.grad_f.iter().fold(1.0_f64, |a, g| a.max(g.abs()));
            if self.projected_gradient_norm() <= omega * gscale {
                return InnerOutcome::Converged;
            }
            let fixed = self.fixed_set();
            if !self.factor_preconditioner(&fixed) {
                return InnerOutcome::NonFinite;
            }
            self.iterations += 1;

            let mut accepted = false;
            for use_memory in [true, false] {
                if !use_memory && s_hist.is_empty() {
                    continue;
                }
                self.direction(&fixed, if use_memory { &s_hist[..] } else { &[] }, &y_hist, &mut dir);
                if let Some(alpha_ok) = self.line_search(&dir, &mut trial, &mut trial_res) {
                    let _ = alpha_ok;
                    accepted = true;
                    break;
                }
                s_hist.clear();
                y_hist.clear();
            }
            if !accepted {
                return InnerOutcome::Stalled;
            }
            let old_z = self.z.clone();
            let old_g = self.grad.clone();
            if !self.move_to(&trial) {
                return InnerOutcome::NonFinite;
            }
            let s: Vec<f64> = (0..n).map(|i| self.z[i] - old_z[i]).collect();
            let y: Vec<f64> = (0..n).map(|i| self.grad[i] - old_g[i]).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|a| a * a).sum();
            let yy: f64 = y.iter().map(|a| a * a).sum();
            if sy > 1e-10 * (ss * yy).sqrt() {
                if s_hist.len() == mem {
                    s_hist.remove(0);
                    y_hist.remove(0);
                }
                s_hist.push(s);
                y_hist.push(y);
            }
            if ss.sqrt() <= 1e-14 * (1.0 + self.z.iter().fold(0.0_f64, |a, v| a.max(v.abs()))) {
                return InnerOutcome::Stalled;
            }
        }
        InnerOutcome::IterationCap
    }

    /// Two-loop recursion on the free variables with the factored
    /// preconditioner as the initial inverse Hessian.
    fn direction(&self, fixed: &[bool], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>], dir: &mut [f64]) {
        let n = self.n;
        let dot = |a: &[f64], b: &[f64]| -> f64 { (0..n).filter(|&i| !fixed[i]).map(|i| a[i] * b[i]).sum() };
        let mut q: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { self.grad[i] }).collect();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        let mut rho = vec![0.0; k];
        for i in (0..k).rev() {
            let sy = dot(&s_hist[i], &y_hist[i]);
            if sy <= 0.0 {
                continue;
            }
            rho[i] = 1.0 / sy;
            alpha[i] = rho[i] * dot(&s_hist[i], &q);
            for t in 0..n {
                if !fixed[t] {
                    q[t] -= alpha[i] * y_hist[i][t];
                }
            }
        }
        let mut r = vec![0.0; n];
        self.chol.solve(&q, &mut r);
        for i in 0..k {
            if rho[i] == 0.0 {
                continue;
            }
            let beta = rho[i] * dot(&y_hist[i], &r);
            for t in 0..n {
                if !fixed[t] {
                    r[t] += (alpha[i] - beta) * s_hist[i][t];
                }
            }
        }
        for i in 0..n {
            dir[i] = if fixed[i] { 0.0 } else { -r[i] };
        }
    }

    /// Projected Armijo backtracking; leaves the accepted point in `trial`.
    fn line_search(&self, dir: &[f64], trial: &mut [f64], trial_res: &mut [f64]) -> Option<f64> {
        let mut alpha = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let mut slope = 0.0;
            for i in 0..self.n {
                trial[i] = (self.z[i] + alpha * dir[i]).clamp(self.lo[i], self.hi[i]);
                slope += self.grad[i] * (trial[i] - self.z[i]);
            }
            if !(slope < 0.0) {
                if alpha < 1.0 && slope == 0.0 {
                    return None;
                }
                alpha *= 0.5;
                continue;
            }
            let phi = self.evaluate_value(trial, trial_res);
            if phi.is_finite() && phi <= self.phi + ARMIJO * slope {
                return Some(alpha);
            }
            alpha *= 0.5;
        }
        None
    }

    fn scaled_violation(&self) -> f64 {
        let mut v = 0.0_f64;
        for (j, &r) in self.res.iter().enumerate() {
            let c = self.row_scale[j] * r;
            v = v.max(if j < self.me { c.abs() } else { -c });
        }
        v
    }

    fn raw_violation(&self) -> f64 {
        let mut v = 0.0_f64;
        for (j, &r) in self.res.iter().enumerate() {
            v = v.max(if j < self.me { r.abs() } else { -r });
        }
        for i in 0..self.n {
            v = v.max(self.lo[i] - self.z[i]).max(self.z[i] - self.hi[i]);
        }
        v
    }

    fn updated_multipliers(&self) -> Vec<f64> {
        (0..self.m)
            .map(|j| {
                let c = self.row_scale[j] * self.res[j];
                let v = self.mult[j] - self.rho * c;
                if j < self.me {
                    v
                } else {
                    v.max(0.0)
                }
            })
            .collect()
    }

    fn raw_multipliers(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .enumerate()
            .map(|(j, &v)| v * self.row_scale[j] / self.obj_scale)
            .collect()
    }

    /// Relative projected stationarity and complementarity in raw units.
    fn optimality(&self, raw_mult: &[f64]) -> (f64, f64) {
        let mut gl = self.grad_f.clone();
        for (r, c, v) in self.jac.iter() {
            gl[c] -= raw_mult[r] * v;
        }
        let scale = self.grad_f.iter().fold(1.0_f64, |a, g| a.max(g.abs()));
        let mut stat = 0.0_f64;
        for i in 0..self.n {
            let step = (self.z[i] - gl[i]).clamp(self.lo[i], self.hi[i]) - self.z[i];
            stat = stat.max(step.abs());
        }
        let mut compl = 0.0_f64;
        for j in self.me..self.m {
            compl = compl.max(raw_mult[j].min(self.res[j]).abs());
        }
        (stat / scale, compl)
    }

    fn run(mut self) -> SolveResult {
        let opts = self.opts;
        if self.failed_init {
            let mult = self.mult.clone();
            return self.finish(SolveStatus::NumericFailure, 0, mult);
        }
        let omega_final = 0.1 * opts.optimality_tol;
        let mut omega = 0.1_f64.max(omega_final);
        let mut eta = 0.1_f64;
        let mut status = SolveStatus::MaxIter;
        let mut outer = 0;
        let mut final_mult = self.mult.clone();
        while outer < opts.max_iterations {
            outer += 1;
            let outcome = self.inner(omega);
            match outcome {
                InnerOutcome::Timeout => {
                    status = SolveStatus::MaxTime;
                    break;
                }
                InnerOutcome::NonFinite => {
                    status = SolveStatus::NumericFailure;
                    break;
                }
                InnerOutcome::Converged | InnerOutcome::Stalled | InnerOutcome::IterationCap => {}
            }
            let trial = self.updated_multipliers();
            let raw = self.raw_multipliers(&trial);
            let (stat, compl) = self.optimality(&raw);
            let viol_raw = self.raw_violation();
            final_mult = trial.clone();
            if viol_raw <= opts.feasibility_tol && stat <= opts.optimality_tol && compl <= opts.optimality_tol {
                self.mult = trial;
                status = SolveStatus::Converged;
                break;
            }
            let viol = self.scaled_violation();
            if viol <= eta.max(0.1 * opts.feasibility_tol) {
                self.mult = trial;
                eta = (eta / self.rho.powf(0.9)).max(0.01 * opts.feasibility_tol);
                omega = (omega / self.rho).max(omega_final);
            } else {
                if self.rho >= opts.max_penalty {
                    status = SolveStatus::InfeasibleDetected;
                    break;
                }
                self.rho = (self.rho * 10.0).min(opts.max_penalty);
                eta = (0.1 / self.rho.powf(0.1)).max(0.01 * opts.feasibility_tol);
                omega = (1.0 / self.rho).max(omega_final);
            }
            // the merit function changed with the multipliers or penalty
            self.phi = self.merit_from_cache();
            self.assemble_merit_gradient();
        }
        self.finish(status, outer, final_mult)
    }

    fn finish(self, status: SolveStatus, outer: usize, scaled_mult: Vec<f64>) -> SolveResult {
        let raw = self.raw_multipliers(&scaled_mult);
        let (stat, compl) = if self.failed_init {
            (f64::INFINITY, f64::INFINITY)
        } else {
            self.optimality(&raw)
        };
        let violation = if self.failed_init {
            f64::INFINITY
        } else {
            self.raw_violation()
        };
        SolveResult {
            status,
            cost: self.cost,
            z: self.z,
            multipliers: raw,
            stationarity: stat,
            complementarity: compl,
            constraint_violation: violation,
            iterations: self.iterations,
            outer_iterations: outer,
            used_recovery: false,
            wall_time: std::time::Duration::ZERO,
        }
    }
}

/// Jacobian rows with duplicate columns merged, columns ascending.
fn merged_rows(jac: &SparseMatrix) -> Vec<Vec<(usize, f64)>> {
    let mut rows = jac.row_lists();
    for row in rows.iter_mut() {
        row.sort_by_key(|&(c, _)| c);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for &(c, v) in row.iter() {
            match merged.last_mut() {
                Some((lc, lv)) if *lc == c => *lv += v,
                _ => merged.push((c, v)),
            }
        }
        *row = merged;
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::kkt_audit;

    /// min (x-2)² + (y-1)²  s.t.  x + y = 2,  x >= 1.6,  0 <= y <= 10
    struct Toy {
        lo: Vec<f64>,
        hi: Vec<f64>,
    }

    impl Nlp for Toy {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_eq(&self) -> usize {
            1
        }
        fn num_ineq(&self) -> usize {
            1
        }
        fn lower_bounds(&self) -> &[f64] {
            &self.lo
        }
        fn upper_bounds(&self) -> &[f64] {
            &self.hi
        }
        fn cost(&self, z: &[f64]) -> f64 {
            (z[0] - 2.0).powi(2) + (z[1] - 1.0).powi(2)
        }
        fn cost_and_gradient(&self, z: &[f64], g: &mut [f64]) -> f64 {
            g[0] = 2.0 * (z[0] - 2.0);
            g[1] = 2.0 * (z[1] - 1.0);
            self.cost(z)
        }
        fn constraints(&self, z: &[f64], out: &mut [f64]) {
            out[0] = z[0] + z[1] - 2.0;
            out[1] = z[0] - 1.6;
        }
        fn constraints_and_jacobian(&self, z: &[f64], out: &mut [f64], jac: &mut SparseMatrix) {
            self.constraints(z, out);
            jac.reset(2, 2);
            jac.push(0, 0, 1.0);
            jac.push(0, 1, 1.0);
            jac.push(1, 0, 1.0);
        }
    }

    #[test]
    fn solves_small_constrained_problem() {
        let toy = Toy {
            lo: vec![f64::NEG_INFINITY, 0.0],
            hi: vec![f64::INFINITY, 10.0],
        };
        let opts = SolveOptions {
            initial_guess: vec![0.0, 0.0],
            ..Default::default()
        };
        let r = solve(&toy, &opts);
        assert_eq!(r.status, SolveStatus::Converged);
        // unconstrained by x >= 1.6: optimum (1.5, 0.5) violates it, so x = 1.6
        assert!((r.z[0] - 1.6).abs() < 1e-4, "{:?}", r.z);
        assert!((r.z[1] - 0.4).abs() < 1e-4);
        let audit = kkt_audit(&toy, &r.z, &r.multipliers);
        assert!(audit.satisfied(1e-4, 1e-3), "{audit:?}");
        // analytic multipliers: λ = 2(y-1) = -1.2, μ = 2(x-2) - λ = 0.4
        assert!((r.multipliers[0] + 1.2).abs() < 1e-2, "{:?}", r.multipliers);
        assert!((r.multipliers[1] - 0.4).abs() < 1e-2);
    }

    #[test]
    fn bound_active_solution() {
        let toy = Toy {
            lo: vec![f64::NEG_INFINITY, 0.0],
            hi: vec![f64::INFINITY, 0.2],
        };
        let opts = SolveOptions {
            initial_guess: vec![5.0, 5.0],
            ..Default::default()
        };
        let r = solve(&toy, &opts);
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.z[1] - 0.2).abs() < 1e-6);
        assert!((r.z[0] - 1.8).abs() < 1e-4);
    }

    #[test]
    fn warm_start_with_multipliers_is_fast() {
        let toy = Toy {
            lo: vec![f64::NEG_INFINITY, 0.0],
            hi: vec![f64::INFINITY, 10.0],
        };
        let cold = solve(
            &toy,
            &SolveOptions {
                initial_guess: vec![0.0, 0.0],
                ..Default::default()
            },
        );
        let warm = solve(
            &toy,
            &SolveOptions {
                initial_guess: cold.z.clone(),
                initial_multipliers: Some(cold.multipliers.clone()),
                ..Default::default()
            },
        );
        assert_eq!(warm.status, SolveStatus::Converged);
        assert!(warm.iterations <= cold.iterations);
        assert_eq!(warm.outer_iterations, 1);
    }

    #[test]
    fn detects_infeasibility() {
        struct Infeasible([f64; 1], [f64; 1]);
        impl Nlp for Infeasible {
            fn num_vars(&self) -> usize {
                1
            }
            fn num_eq(&self) -> usize {
                0
            }
            fn num_ineq(&self) -> usize {
                2
            }
            fn lower_bounds(&self) -> &[f64] {
                &self.0
            }
            fn upper_bounds(&self) -> &[f64] {
                &self.1
            }
            fn cost(&self, z: &[f64]) -> f64 {
                z[0] * z[0]
            }
            fn cost_and_gradient(&self, z: &[f64], g: &mut [f64]) -> f64 {
                g[0] = 2.0 * z[0];
                z[0] * z[0]
            }
            fn constraints(&self, z: &[f64], out: &mut [f64]) {
                out[0] = z[0] - 1.0;
                out[1] = -z[0];
            }
            fn constraints_and_jacobian(&self, z: &[f64], out: &mut [f64], jac: &mut SparseMatrix) {
                self.constraints(z, out);
                jac.reset(2, 1);
                jac.push(0, 0, 1.0);
                jac.push(1, 0, -1.0);
            }
        }
        let p = Infeasible([f64::NEG_INFINITY], [f64::INFINITY]);
        let r = solve(
            &p,
            &SolveOptions {
                initial_guess: vec![0.3],
                max_iterations: 100,
                ..Default::default()
            },
        );
        assert_eq!(r.status, SolveStatus::InfeasibleDetected);
        assert!(r.z[0].is_finite());
    }

    #[test]
    fn non_finite_start_uses_recovery() {
        struct Log([f64; 1], [f64; 1]);
        impl Nlp for Log {
            fn num_vars(&self) -> usize {
                1
            }
            fn num_eq(&self) -> usize {
                0
            }
            fn num_ineq(&self) -> usize {
                0
            }
            fn lower_bounds(&self) -> &[f64] {
                &self.0
            }
            fn upper_bounds(&self) -> &[f64] {
                &self.1
            }
            fn cost(&self, z: &[f64]) -> f64 {
                z[0] - z[0].ln()
            }
            fn cost_and_gradient(&self, z: &[f64], g: &mut [f64]) -> f64 {
                g[0] = 1.0 - 1.0 / z[0];
                self.cost(z)
            }
            fn constraints(&self, _z: &[f64], _out: &mut [f64]) {}
            fn constraints_and_jacobian(&self, _z: &[f64], _out: &mut [f64], jac: &mut SparseMatrix) {
                jac.reset(0, 1);
            }
        }
        let p = Log([f64::NEG_INFINITY], [f64::INFINITY]);
        let r = solve(
            &p,
            &SolveOptions {
                initial_guess: vec![-1.0],
                recovery_guess: Some(vec![3.0]),
                ..Default::default()
            },
        );
        assert!(r.used_recovery);
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.z[0] - 1.0).abs() < 1e-2);
    }
}
