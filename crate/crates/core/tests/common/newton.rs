//! Dense Newton solve of the exact branch-flow equations, used as an
//! independent reference for the sweep-based plant.

use gridmpc::netmodel::NetworkModel;
use nalgebra::{DMatrix, DVector};

/// Returns `(P, l, v)` with `v[k]` the squared voltage of bus `k + 2`.
pub fn newton_powerflow(net: &NetworkModel, inj: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let nb = net.n_br();
    let nv = net.n_bus() - 1;
    let dim = 2 * nb + nv;
    // x = [P; l; v]
    let mut x = DVector::zeros(dim);
    for k in 0..nv {
        x[2 * nb + k] = 1.0;
    }
    let vcol = |bus: usize| {
        if bus == 1 {
            None
        } else {
            Some(2 * nb + bus - 2)
        }
    };
    for _ in 0..50 {
        let mut f = DVector::zeros(dim);
        let mut jac = DMatrix::zeros(dim, dim);
        let v = |x: &DVector<f64>, bus: usize| vcol(bus).map_or(1.0, |c| x[c]);
        for (e, b) in net.branches.iter().enumerate() {
            let (i, j, r) = (b.from_bus, b.to_bus, b.r_pu);
            // balance at j
            let mut fb = -x[e] + x[nb + e] * r - inj[j - 1];
            jac[(e, e)] = -1.0;
            jac[(e, nb + e)] = r;
            for &c in net.child_branches(j) {
                fb += x[c];
                jac[(e, c)] += 1.0;
            }
            f[e] = fb;
            // voltage drop
            let row = nb + e;
            f[row] = v(&x, i) + x[nb + e] * r * r - 2.0 * x[e] * r - v(&x, j);
            if let Some(ci) = vcol(i) {
                jac[(row, ci)] = 1.0;
            }
            jac[(row, vcol(j).unwrap())] = -1.0;
            jac[(row, nb + e)] = r * r;
            jac[(row, e)] = -2.0 * r;
            // current definition l v_i = P²
            let row = 2 * nb + e;
            f[row] = x[nb + e] * v(&x, i) - x[e] * x[e];
            jac[(row, nb + e)] = v(&x, i);
            if let Some(ci) = vcol(i) {
                jac[(row, ci)] = x[nb + e];
            }
            jac[(row, e)] = -2.0 * x[e];
        }
        if f.amax() < 1e-14 {
            break;
        }
        let dx = jac.lu().solve(&(-f)).expect("nonsingular Jacobian");
        x += dx;
    }
    (
        x.rows(0, nb).iter().copied().collect(),
        x.rows(nb, nb).iter().copied().collect(),
        x.rows(2 * nb, nv).iter().copied().collect(),
    )
}
