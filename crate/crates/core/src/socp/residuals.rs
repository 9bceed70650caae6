use serde::{Deserialize, Serialize};

use super::csc::{dot, inf_norm, Csc};
use super::{ConicProgram, Duals, Tolerances};

/// Absolute residuals (∞-norms) of the optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub eq: f64,
    pub ineq: f64,
    pub bounds: f64,
    pub cone: f64,
    pub dual: f64,
    /// Largest violation of dual sign or cone membership.
    pub dual_cone: f64,
    /// Largest |multiplier · slack| over rows and cone blocks.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn primal(&self) -> f64 {
        self.eq.max(self.ineq).max(self.bounds).max(self.cone)
    }

    pub fn within(&self, tol: &Tolerances) -> bool {
        self.primal() <= tol.feas
            && self.dual <= tol.feas
            && self.dual_cone <= tol.feas
            && self.complementarity <= tol.gap
    }
}

pub fn kkt_residuals(program: &ConicProgram, u: &[f64], duals: &Duals) -> KktResiduals {
    let n = program.n_vars();
    assert_eq!(u.len(), n, "primal vector length");
    let mut grad = program.cost.clone();

    let eq = Csc::from_sprs(&program.eq);
    let mut r_eq = vec![0.0; eq.nrows];
    eq.mul_add(u, &mut r_eq);
    for (r, b) in r_eq.iter_mut().zip(&program.eq_rhs) {
        *r -= b;
    }
    if !duals.eq.is_empty() {
        eq.mul_t_add(&duals.eq, &mut grad);
    }

    let ineq = Csc::from_sprs(&program.ineq);
    let mut ax = vec![0.0; ineq.nrows];
    ineq.mul_add(u, &mut ax);
    let mut r_ineq = 0.0f64;
    let mut compl = 0.0f64;
    let mut dual_cone = 0.0f64;
    for (i, (v, b)) in ax.iter().zip(&program.ineq_rhs).enumerate() {
        r_ineq = r_ineq.max(v - b);
        if let Some(&zi) = duals.ineq.get(i) {
            compl = compl.max((zi * (b - v)).abs());
            dual_cone = dual_cone.max(-zi);
        }
    }
    if !duals.ineq.is_empty() {
        ineq.mul_t_add(&duals.ineq, &mut grad);
    }

    let mut r_bounds = 0.0f64;
    for j in 0..n {
        let (l, ub) = (program.lower[j], program.upper[j]);
        r_bounds = r_bounds.max(l - u[j]).max(u[j] - ub);
        let zl = duals.lower.get(j).copied().unwrap_or(0.0);
        let zu = duals.upper.get(j).copied().unwrap_or(0.0);
        grad[j] += zu - zl;
        dual_cone = dual_cone.max(-zl).max(-zu);
        if zl != 0.0 {
            compl = compl.max((zl * (u[j] - l)).abs());
        }
        if zu != 0.0 {
            compl = compl.max((zu * (ub - u[j])).abs());
        }
    }

    let mut r_cone = 0.0f64;
    for (k, cb) in program.cones.iter().enumerate() {
        let a = Csc::from_sprs(&cb.a);
        let mut s1 = vec![0.0; a.nrows];
        a.mul_add(u, &mut s1);
        for (r, b) in s1.iter_mut().zip(&cb.b) {
            *r -= b;
        }
        let s0 = cb.d.iter().map(|(j, v)| v * u[j]).sum::<f64>() - cb.gamma;
        r_cone = r_cone.max(dot(&s1, &s1).sqrt() - s0);
        if let Some(zk) = duals.cones.get(k) {
            let (t, w) = (zk[0], &zk[1..]);
            for (j, v) in cb.d.iter() {
                grad[j] -= t * v;
            }
            let mut at_w = vec![0.0; n];
            a.mul_t_add(w, &mut at_w);
            for (g, v) in grad.iter_mut().zip(&at_w) {
                *g -= v;
            }
            dual_cone = dual_cone.max(dot(w, w).sqrt() - t);
            compl = compl.max((t * s0 + dot(w, &s1)).abs());
        }
    }

    KktResiduals {
        eq: inf_norm(&r_eq),
        ineq: r_ineq.max(0.0),
        bounds: r_bounds.max(0.0),
        cone: r_cone.max(0.0),
        dual: inf_norm(&grad),
        dual_cone,
        complementarity: compl,
    }
}
