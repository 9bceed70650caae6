//! Infeasible primal-dual path-following method with Nesterov-Todd scaling.
//!
//! Internally the program is brought to `min cᵀx s.t. Ax = b, Gx + s = h,
//! s ∈ K`, with `K` a product of a nonnegative orthant (linear inequalities
//! and finite bounds) and second-order cones.

use std::time::Instant;

use log::{debug, trace};

use super::cone::{add_identity, jordan_div, jordan_product, max_step, min_eig, ConeSpec, NtScaling};
use super::csc::{dot, inf_norm, Csc};
use super::kkt::Kkt;
use super::{ConicProgram, Duals, ProgramError, SolveStatus, SolverOptions, SolverResult};

/// Where each standard-form row came from.
#[derive(Debug, Clone)]
pub(crate) struct RowMap {
    pub n_eq: usize,
    pub fixed: Vec<usize>,
    pub n_ineq: usize,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    pub cone_dims: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub c: Vec<f64>,
    pub a: Csc,
    pub b: Vec<f64>,
    pub g: Csc,
    pub h: Vec<f64>,
    pub cones: ConeSpec,
    pub map: RowMap,
}

impl StandardForm {
    pub fn from_program(prog: &ConicProgram) -> Self {
        let n = prog.n_vars();
        let eq = Csc::from_sprs(&prog.eq);
        let mut a_t: Vec<_> = eq.triplets().collect();
        let mut b = prog.eq_rhs.clone();
        let mut fixed = Vec::new();
        for j in 0..n {
            if prog.lower[j] == prog.upper[j] {
                a_t.push((b.len(), j, 1.0));
                b.push(prog.lower[j]);
                fixed.push(j);
            }
        }
        let a = Csc::from_triplets(b.len(), n, a_t);

        let ineq = Csc::from_sprs(&prog.ineq);
        let mut g_t: Vec<_> = ineq.triplets().collect();
        let mut h = prog.ineq_rhs.clone();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for j in 0..n {
            if prog.lower[j] != prog.upper[j] && prog.lower[j].is_finite() {
                g_t.push((h.len(), j, -1.0));
                h.push(-prog.lower[j]);
                lower.push(j);
            }
        }
        for j in 0..n {
            if prog.lower[j] != prog.upper[j] && prog.upper[j].is_finite() {
                g_t.push((h.len(), j, 1.0));
                h.push(prog.upper[j]);
                upper.push(j);
            }
        }
        let nonneg = h.len();
        let mut cone_dims = Vec::with_capacity(prog.cones.len());
        for cb in &prog.cones {
            let r0 = h.len();
            for (&v, j) in cb.d.iter().map(|(j, v)| (v, j)) {
                g_t.push((r0, j, -v));
            }
            h.push(-cb.gamma);
            for (&v, (r, c)) in cb.a.iter() {
                g_t.push((r0 + 1 + r, c, -v));
            }
            h.extend(cb.b.iter().map(|x| -x));
            cone_dims.push(cb.rows() + 1);
        }
        let g = Csc::from_triplets(h.len(), n, g_t);
        Self {
            c: prog.cost.clone(),
            a,
            b,
            g,
            h,
            cones: ConeSpec {
                nonneg,
                soc: cone_dims.clone(),
            },
            map: RowMap {
                n_eq: prog.eq_rhs.len(),
                fixed,
                n_ineq: prog.ineq_rhs.len(),
                lower,
                upper,
                cone_dims,
            },
        }
    }

    pub fn split_duals(&self, n: usize, y: &[f64], z: &[f64]) -> Duals {
        let map = &self.map;
        let mut duals = Duals {
            eq: y[..map.n_eq].to_vec(),
            ineq: z[..map.n_ineq].to_vec(),
            lower: vec![0.0; n],
            upper: vec![0.0; n],
            cones: Vec::with_capacity(map.cone_dims.len()),
        };
        let mut k = map.n_ineq;
        for &j in &map.lower {
            duals.lower[j] = z[k];
            k += 1;
        }
        for &j in &map.upper {
            duals.upper[j] = z[k];
            k += 1;
        }
        for (i, &j) in map.fixed.iter().enumerate() {
            let v = y[map.n_eq + i];
            if v >= 0.0 {
                duals.upper[j] = v;
            } else {
                duals.lower[j] = -v;
            }
        }
        for &q in &map.cone_dims {
            duals.cones.push(z[k..k + q].to_vec());
            k += q;
        }
        duals
    }
}

/// Diagonal equilibration `Ã = E_a A D`, `G̃ = E_g G D`, `c̃ = ρ D c`, with a
/// single factor per cone block in `E_g`.
struct Scaling {
    d: Vec<f64>,
    ea: Vec<f64>,
    eg: Vec<f64>,
    rho: f64,
}

impl Scaling {
    fn identity(sf: &StandardForm) -> Self {
        Self {
            d: vec![1.0; sf.c.len()],
            ea: vec![1.0; sf.b.len()],
            eg: vec![1.0; sf.h.len()],
            rho: 1.0,
        }
    }

    fn ruiz(sf: &StandardForm, passes: usize) -> Self {
        let mut s = Self::identity(sf);
        let mut a = sf.a.clone();
        let mut g = sf.g.clone();
        let n = sf.c.len();
        let clamp = |x: f64| {
            if x < 1e-8 {
                1.0
            } else {
                1.0 / x.sqrt().clamp(1e-4, 1e4)
            }
        };
        for _ in 0..passes {
            let mut col = vec![0.0f64; n];
            let mut row_a = vec![0.0f64; a.nrows];
            let mut row_g = vec![0.0f64; g.nrows];
            for (m, row) in [(&a, &mut row_a), (&g, &mut row_g)] {
                for (r, c, v) in m.triplets() {
                    col[c] = col[c].max(v.abs());
                    row[r] = row[r].max(v.abs());
                }
            }
            for (st, q) in sf.cones.soc_ranges() {
                let mx = row_g[st..st + q].iter().fold(0.0f64, |m, &x| m.max(x));
                row_g[st..st + q].fill(mx);
            }
            let dc: Vec<f64> = col.iter().map(|&x| clamp(x)).collect();
            let da: Vec<f64> = row_a.iter().map(|&x| clamp(x)).collect();
            let dg: Vec<f64> = row_g.iter().map(|&x| clamp(x)).collect();
            a.scale(&da, &dc);
            g.scale(&dg, &dc);
            for (x, f) in s.d.iter_mut().zip(&dc) {
                *x *= f;
            }
            for (x, f) in s.ea.iter_mut().zip(&da) {
                *x *= f;
            }
            for (x, f) in s.eg.iter_mut().zip(&dg) {
                *x *= f;
            }
        }
        let cmax = sf.c.iter().zip(&s.d).fold(0.0f64, |m, (c, d)| m.max((c * d).abs()));
        s.rho = if cmax > 1e-12 { 1.0 / cmax.max(1e-6) } else { 1.0 };
        s
    }

    fn apply(&self, sf: &StandardForm) -> StandardForm {
        let mut out = sf.clone();
        out.a.scale(&self.ea, &self.d);
        out.g.scale(&self.eg, &self.d);
        for (x, f) in out.b.iter_mut().zip(&self.ea) {
            *x *= f;
        }
        for (x, f) in out.h.iter_mut().zip(&self.eg) {
            *x *= f;
        }
        for (x, f) in out.c.iter_mut().zip(&self.d) {
            *x *= f * self.rho;
        }
        out
    }
}

struct Metrics {
    pres: f64,
    dres: f64,
    gap: f64,
    relgap: f64,
    pcost: f64,
    dcost: f64,
}

struct Unscaled {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
}

fn unscale(sc: &Scaling, x: &[f64], y: &[f64], s: &[f64], z: &[f64]) -> Unscaled {
    Unscaled {
        x: x.iter().zip(&sc.d).map(|(v, d)| v * d).collect(),
        y: y.iter().zip(&sc.ea).map(|(v, e)| v * e / sc.rho).collect(),
        s: s.iter().zip(&sc.eg).map(|(v, e)| v / e).collect(),
        z: z.iter().zip(&sc.eg).map(|(v, e)| v * e / sc.rho).collect(),
    }
}

fn metrics(sf: &StandardForm, u: &Unscaled) -> Metrics {
    let (n, p, m) = (sf.c.len(), sf.b.len(), sf.h.len());
    let mut ry = vec![0.0; p];
    sf.a.mul_add(&u.x, &mut ry);
    for (r, b) in ry.iter_mut().zip(&sf.b) {
        *r -= b;
    }
    let mut rz = vec![0.0; m];
    sf.g.mul_add(&u.x, &mut rz);
    for i in 0..m {
        rz[i] += u.s[i] - sf.h[i];
    }
    let mut rx = sf.c.clone();
    sf.a.mul_t_add(&u.y, &mut rx);
    sf.g.mul_t_add(&u.z, &mut rx);
    debug_assert_eq!(rx.len(), n);
    let pres = (inf_norm(&ry) / (1.0 + inf_norm(&sf.b))).max(inf_norm(&rz) / (1.0 + inf_norm(&sf.h)));
    let dres = inf_norm(&rx) / (1.0 + inf_norm(&sf.c));
    let pcost = dot(&sf.c, &u.x);
    let dcost = -dot(&sf.b, &u.y) - dot(&sf.h, &u.z);
    let gap = dot(&u.s, &u.z);
    let relgap = gap.abs().max((pcost - dcost).abs()) / pcost.abs().max(1.0);
    Metrics {
        pres,
        dres,
        gap,
        relgap,
        pcost,
        dcost,
    }
}

/// Solves a conic program. Malformed programs are rejected up front; solver
/// outcomes (including infeasibility) are reported through `status`.
pub fn solve(program: &ConicProgram, opts: &SolverOptions) -> Result<SolverResult, ProgramError> {
    program.validate()?;
    let t_start = Instant::now();
    let orig = StandardForm::from_program(program);
    let scaling = if opts.equilibrate {
        Scaling::ruiz(&orig, 15)
    } else {
        Scaling::identity(&orig)
    };
    let sf = scaling.apply(&orig);
    let (n, p, m) = (sf.c.len(), sf.b.len(), sf.h.len());
    let cones = &sf.cones;
    let nu = cones.degree().max(1) as f64;
    let tol = opts.tolerances;

    let mut kkt = Kkt::new(
        &sf.a,
        &sf.g,
        cones,
        opts.static_reg,
        opts.dense_threshold,
        opts.refine_steps,
    );
    let dim = kkt.dim();
    let mut rhs = vec![0.0; dim];
    let mut sol = vec![0.0; dim];

    // Initial point: least-squares primal and dual estimates shifted into K.
    kkt.factor(cones, None);
    rhs[n..n + p].copy_from_slice(&sf.b);
    rhs[n + p..].copy_from_slice(&sf.h);
    kkt.solve(&sf.a, &sf.g, cones, None, &rhs, &mut sol);
    let mut x = sol[..n].to_vec();
    let mut s: Vec<f64> = sol[n + p..].iter().map(|v| -v).collect();
    rhs.fill(0.0);
    for (r, c) in rhs[..n].iter_mut().zip(&sf.c) {
        *r = -c;
    }
    kkt.solve(&sf.a, &sf.g, cones, None, &rhs, &mut sol);
    let mut y = sol[n..n + p].to_vec();
    let mut z = sol[n + p..].to_vec();
    for v in [&mut s, &mut z] {
        let e = min_eig(cones, v);
        if m > 0 && e < 1e-8 {
            add_identity(cones, v, 1.0 - e.min(0.0));
        }
    }

    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;
    let mut iter_times = Vec::new();
    let mut best_merit = f64::INFINITY;
    let mut last_progress = 0;
    let last;

    let (mut rx, mut ry, mut rz) = (vec![0.0; n], vec![0.0; p], vec![0.0; m]);
    let (mut lambda, mut t, mut tmp, mut ds) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let (mut ws_a, mut wz_a, mut rc) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);

    loop {
        let u = unscale(&scaling, &x, &y, &s, &z);
        let met = metrics(&orig, &u);
        trace!(
            "iter {iterations}: pcost {:.8e} dcost {:.8e} gap {:.2e} pres {:.2e} dres {:.2e}",
            met.pcost,
            met.dcost,
            met.gap,
            met.pres,
            met.dres
        );
        if met.pres <= tol.feas && met.dres <= tol.feas && met.relgap <= tol.gap {
            status = SolveStatus::Optimal;
            last = Some((u, met));
            break;
        }
        if let Some(st) = certificate(&orig, &u, tol.feas) {
            status = st;
            last = Some((u, met));
            break;
        }
        let merit = met.pres.max(met.dres).max(met.relgap);
        if !merit.is_finite() || inf_norm(&u.x) > 1e12 {
            status = if merit.is_finite() {
                SolveStatus::Unbounded
            } else {
                SolveStatus::Infeasible
            };
            last = Some((u, met));
            break;
        }
        if merit < best_merit * (1.0 - 1e-3) {
            best_merit = merit;
            last_progress = iterations;
        } else if iterations - last_progress >= opts.stall_iterations {
            debug!("no progress in {} iterations, giving up", opts.stall_iterations);
            status = if near_optimal(&met, &tol) {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            };
            last = Some((u, met));
            break;
        }
        if iterations >= opts.max_iter {
            last = Some((u, met));
            break;
        }

        let t_iter = Instant::now();
        // Scaled residuals.
        rx.copy_from_slice(&sf.c);
        sf.a.mul_t_add(&y, &mut rx);
        sf.g.mul_t_add(&z, &mut rx);
        for (r, b) in ry.iter_mut().zip(&sf.b) {
            *r = -b;
        }
        sf.a.mul_add(&x, &mut ry);
        for i in 0..m {
            rz[i] = s[i] - sf.h[i];
        }
        sf.g.mul_add(&x, &mut rz);

        let w = NtScaling::new(cones, &s, &z);
        w.apply(cones, &z, &mut lambda);
        kkt.factor(cones, Some(&w));
        let mu = dot(&s, &z) / nu;

        let mut solve_dir = |t: &[f64], sol: &mut [f64], ds: &mut [f64], tmp: &mut [f64]| {
            for i in 0..n {
                rhs[i] = -rx[i];
            }
            for i in 0..p {
                rhs[n + i] = -ry[i];
            }
            w.apply(cones, t, tmp);
            for i in 0..m {
                rhs[n + p + i] = -rz[i] + tmp[i];
            }
            kkt.solve(&sf.a, &sf.g, cones, Some(&w), &rhs, sol);
            // ds = −W (t + W dz)
            w.apply(cones, &sol[n + p..], tmp);
            for i in 0..m {
                tmp[i] += t[i];
            }
            w.apply(cones, tmp, ds);
            for v in ds.iter_mut() {
                *v = -*v;
            }
        };

        let sigma = if opts.mehrotra {
            // Affine predictor: λ⧵(λ∘λ) = λ.
            solve_dir(&lambda, &mut sol, &mut ds, &mut tmp);
            let dz = &sol[n + p..];
            let alpha_a = max_step(cones, &s, &ds).min(max_step(cones, &z, dz));
            w.apply_inv(cones, &ds, &mut ws_a);
            w.apply(cones, dz, &mut wz_a);
            let sigma = (1.0 - alpha_a).clamp(0.0, 1.0).powi(3);
            jordan_product(cones, &lambda, &lambda, &mut rc);
            jordan_product(cones, &ws_a, &wz_a, &mut tmp);
            for i in 0..m {
                rc[i] += tmp[i];
            }
            sigma
        } else {
            jordan_product(cones, &lambda, &lambda, &mut rc);
            opts.sigma
        };
        add_identity(cones, &mut rc, -sigma * mu);
        jordan_div(cones, &lambda, &rc, &mut t);
        solve_dir(&t, &mut sol, &mut ds, &mut tmp);

        if !sol.iter().chain(ds.iter()).all(|v| v.is_finite()) {
            // Breakdown of the KKT solve: keep the last finite iterate.
            status = if near_optimal(&met, &tol) {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalError
            };
            debug!("non-finite search direction at iteration {iterations}");
            last = Some((u, met));
            break;
        }
        let dz = &sol[n + p..];
        let alpha_max = max_step(cones, &s, &ds).min(max_step(cones, &z, dz));
        let alpha = if m == 0 { 1.0 } else { (0.99 * alpha_max).min(1.0) };
        for i in 0..n {
            x[i] += alpha * sol[i];
        }
        for i in 0..p {
            y[i] += alpha * sol[n + i];
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        iterations += 1;
        iter_times.push(t_iter.elapsed().as_secs_f64());
        trace!(
            "  sigma {sigma:.3e} alpha {alpha:.3e} reg pivots {}",
            kkt.regularized_pivots
        );
    }

    let (u, met) = last.expect("loop always records the final iterate");
    iter_times.sort_by(f64::total_cmp);
    let per_iteration_time = if iter_times.is_empty() {
        0.0
    } else {
        iter_times[iter_times.len() / 2]
    };
    let duals = orig.split_duals(n, &u.y, &u.z);
    debug!(
        "solve: {:?} after {} iterations, objective {:.8e}, kkt dim {}",
        status, iterations, met.pcost, dim
    );
    Ok(SolverResult {
        objective: met.pcost,
        u_star: u.x,
        iterations,
        duality_gap: met.relgap,
        primal_residual: met.pres,
        dual_residual: met.dres,
        status,
        duals,
        per_iteration_time,
        solve_time: t_start.elapsed().as_secs_f64(),
        kkt_dim: dim,
        factor_nnz: kkt.factor_nnz(),
    })
}

/// Reduced tolerances accepted when the iteration cannot make further
/// progress.
const REDUCED_TOL_FACTOR: f64 = 100.0;

fn near_optimal(met: &Metrics, tol: &super::Tolerances) -> bool {
    met.pres <= REDUCED_TOL_FACTOR * tol.feas
        && met.dres <= REDUCED_TOL_FACTOR * tol.feas
        && met.relgap <= REDUCED_TOL_FACTOR * tol.gap
}

fn certificate(sf: &StandardForm, u: &Unscaled, tol: f64) -> Option<SolveStatus> {
    let by_hz = dot(&sf.b, &u.y) + dot(&sf.h, &u.z);
    if by_hz < 0.0 {
        let mut r = vec![0.0; sf.c.len()];
        sf.a.mul_t_add(&u.y, &mut r);
        sf.g.mul_t_add(&u.z, &mut r);
        if inf_norm(&r) <= tol * -by_hz {
            return Some(SolveStatus::Infeasible);
        }
    }
    let cx = dot(&sf.c, &u.x);
    if cx < 0.0 {
        let mut ra = vec![0.0; sf.b.len()];
        sf.a.mul_add(&u.x, &mut ra);
        let mut rg = u.s.clone();
        sf.g.mul_add(&u.x, &mut rg);
        if inf_norm(&ra) <= tol * -cx && inf_norm(&rg) <= tol * -cx {
            return Some(SolveStatus::Unbounded);
        }
    }
    None
}
