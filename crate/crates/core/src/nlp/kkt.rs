use super::{Nlp, SparseMatrix};

/// First-order optimality measures re-evaluated from the problem itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `|P(z - ∇L) - z|∞ / max(1, |∇f|∞)`
    pub stationarity: f64,
    /// Largest raw equality residual or inequality/bound violation.
    pub feasibility: f64,
    /// `max |min(μ, g)|`
    pub complementarity: f64,
    /// Most negative inequality multiplier (0 if none).
    pub dual_infeasibility: f64,
}

impl KktReport {
    pub fn satisfied(&self, feasibility_tol: f64, optimality_tol: f64) -> bool {
        self.feasibility <= feasibility_tol
            && self.stationarity <= optimality_tol
            && self.complementarity <= optimality_tol
            && self.dual_infeasibility <= optimality_tol
    }
}

/// Evaluates the KKT conditions at `(z, multipliers)` without any solver state.
pub fn kkt_audit(nlp: &dyn Nlp, z: &[f64], multipliers: &[f64]) -> KktReport {
    let n = nlp.num_vars();
    let me = nlp.num_eq();
    let m = nlp.num_constraints();
    assert_eq!(z.len(), n);
    assert_eq!(multipliers.len(), m);

    let mut grad = vec![0.0; n];
    nlp.cost_and_gradient(z, &mut grad);
    let mut res = vec![0.0; m];
    let mut jac = SparseMatrix::new(m, n);
    nlp.constraints_and_jacobian(z, &mut res, &mut jac);

    let mut jt_mult = vec![0.0; n];
    jac.tmul_vec(multipliers, &mut jt_mult);
    let (lo, hi) = (nlp.lower_bounds(), nlp.upper_bounds());
    let scale = grad.iter().fold(1.0_f64, |a, g| a.max(g.abs()));
    let mut stat = 0.0_f64;
    let mut feas = 0.0_f64;
    for i in 0..n {
        let gl = grad[i] - jt_mult[i];
        let step = (z[i] - gl).clamp(lo[i], hi[i]) - z[i];
        stat = stat.max(step.abs());
        feas = feas.max(lo[i] - z[i]).max(z[i] - hi[i]);
    }
    let mut compl = 0.0_f64;
    let mut dual = 0.0_f64;
    for (j, &r) in res.iter().enumerate() {
        if j < me {
            feas = feas.max(r.abs());
        } else {
            feas = feas.max(-r);
            let mu = multipliers[j];
            compl = compl.max(mu.min(r).abs());
            dual = dual.max(-mu);
        }
    }
    KktReport {
        stationarity: stat / scale,
        feasibility: feas,
        complementarity: compl,
        dual_infeasibility: dual,
    }
}
