//! Quasi-definite KKT system
//!
//! ```text
//! [ δI   Aᵀ   Gᵀ      ] [dx]   [rx]
//! [ A   −δI   0       ] [dy] = [ry]
//! [ G    0   −W² − δI ] [dz]   [rz]
//! ```
//!
//! The sparsity pattern is fixed for a program, so ordering and symbolic
//! analysis happen once and each iteration only refreshes the `W²` block.

use super::cone::{ConeSpec, NtScaling};
use super::csc::{inf_norm, Csc};
use super::ldl::{DenseLdl, SparseLdl, UpperCsc};
use super::ordering::{inverse_permutation, minimum_degree};

enum Factor {
    Sparse {
        pattern: UpperCsc,
        ldl: Box<SparseLdl>,
        perm: Vec<usize>,
        pinv: Vec<usize>,
    },
    Dense {
        ldl: DenseLdl,
        matrix: Vec<f64>,
    },
}

struct Entry {
    row: usize,
    col: usize,
    value: f64,
}

pub(crate) struct Kkt {
    n: usize,
    p: usize,
    m: usize,
    dim: usize,
    entries: Vec<Entry>,
    /// Index of the first `W²`-block entry in `entries`.
    w_start: usize,
    /// Storage slot of each entry (sparse) or flat index (dense).
    slot: Vec<usize>,
    values: Vec<f64>,
    signs: Vec<f64>,
    factor: Factor,
    static_reg: f64,
    refine_steps: usize,
    soc_buf: Vec<f64>,
    work: Vec<f64>,
    corr: Vec<f64>,
    pub regularized_pivots: usize,
}

impl Kkt {
    pub fn new(
        a: &Csc,
        g: &Csc,
        cones: &ConeSpec,
        static_reg: f64,
        dense_threshold: usize,
        refine_steps: usize,
    ) -> Self {
        let (n, p, m) = (a.ncols, a.nrows, g.nrows);
        let dim = n + p + m;
        let mut entries = Vec::with_capacity(n + p + a.vals.len() + g.vals.len() + m * 3);
        for i in 0..n {
            entries.push(Entry {
                row: i,
                col: i,
                value: static_reg,
            });
        }
        for i in 0..p {
            entries.push(Entry {
                row: n + i,
                col: n + i,
                value: -static_reg,
            });
        }
        for (r, c, v) in a.triplets() {
            entries.push(Entry {
                row: c,
                col: n + r,
                value: v,
            });
        }
        for (r, c, v) in g.triplets() {
            entries.push(Entry {
                row: c,
                col: n + p + r,
                value: v,
            });
        }
        let w_start = entries.len();
        let z0 = n + p;
        for i in 0..cones.nonneg {
            entries.push(Entry {
                row: z0 + i,
                col: z0 + i,
                value: -1.0 - static_reg,
            });
        }
        for (st, q) in cones.soc_ranges() {
            for i in 0..q {
                for j in i..q {
                    let diag = if i == j { -1.0 - static_reg } else { 0.0 };
                    entries.push(Entry {
                        row: z0 + st + i,
                        col: z0 + st + j,
                        value: diag,
                    });
                }
            }
        }
        let mut signs = vec![1.0; dim];
        for s in &mut signs[n..] {
            *s = -1.0;
        }

        let (factor, slot) = if dim < dense_threshold {
            let slot = entries.iter().map(|e| e.row * dim + e.col).collect();
            (
                Factor::Dense {
                    ldl: DenseLdl::new(dim),
                    matrix: vec![0.0; dim * dim],
                },
                slot,
            )
        } else {
            Self::sparse_factor(dim, &entries)
        };
        let values = entries.iter().map(|e| e.value).collect();
        Self {
            n,
            p,
            m,
            dim,
            entries,
            w_start,
            slot,
            values,
            signs,
            factor,
            static_reg,
            refine_steps,
            soc_buf: Vec::new(),
            work: vec![0.0; dim],
            corr: vec![0.0; dim],
            regularized_pivots: 0,
        }
    }

    fn sparse_factor(dim: usize, entries: &[Entry]) -> (Factor, Vec<usize>) {
        let mut adjacency = vec![Vec::new(); dim];
        for e in entries {
            if e.row != e.col {
                adjacency[e.row].push(e.col);
                adjacency[e.col].push(e.row);
            }
        }
        let perm = minimum_degree(&adjacency);
        let pinv = inverse_permutation(&perm);
        let mut order: Vec<(usize, usize, usize)> = entries
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let (a, b) = (pinv[e.row], pinv[e.col]);
                (a.min(b), a.max(b), k)
            })
            .collect();
        order.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut colptr = vec![0; dim + 1];
        let mut rowidx = Vec::with_capacity(order.len());
        let mut slot = vec![0; entries.len()];
        for (pos, &(r, c, k)) in order.iter().enumerate() {
            colptr[c + 1] += 1;
            rowidx.push(r);
            slot[k] = pos;
        }
        for c in 0..dim {
            colptr[c + 1] += colptr[c];
        }
        let pattern = UpperCsc { n: dim, colptr, rowidx };
        let ldl = Box::new(SparseLdl::symbolic(&pattern));
        (
            Factor::Sparse {
                pattern,
                ldl,
                perm,
                pinv,
            },
            slot,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factor_nnz(&self) -> usize {
        match &self.factor {
            Factor::Sparse { ldl, .. } => ldl.nnz_l(),
            Factor::Dense { .. } => self.dim * (self.dim - 1) / 2,
        }
    }

    /// Refreshes the `−W² − δI` block (identity scaling when `w` is `None`)
    /// and refactors.
    pub fn factor(&mut self, cones: &ConeSpec, w: Option<&NtScaling>) {
        let reg = self.static_reg;
        let mut k = self.w_start;
        match w {
            None => {
                for i in 0..cones.nonneg {
                    self.values[k + i] = -1.0 - reg;
                }
                k += cones.nonneg;
                for &q in &cones.soc {
                    for i in 0..q {
                        for j in i..q {
                            self.values[k] = if i == j { -1.0 - reg } else { 0.0 };
                            k += 1;
                        }
                    }
                }
            }
            Some(w) => {
                for (i, w2) in w.nonneg_sq().enumerate() {
                    self.values[k + i] = -w2 - reg;
                }
                k += cones.nonneg;
                for (c, &q) in cones.soc.iter().enumerate() {
                    w.soc_sq(c, &mut self.soc_buf);
                    for i in 0..q {
                        for j in i..q {
                            let d = if i == j { reg } else { 0.0 };
                            self.values[k] = -self.soc_buf[i * q + j] - d;
                            k += 1;
                        }
                    }
                }
            }
        }
        debug_assert_eq!(k, self.entries.len());

        let eps = 1e-13;
        let delta = 1e-7;
        self.regularized_pivots = match &mut self.factor {
            Factor::Sparse { pattern, ldl, perm, .. } => {
                let mut ax = vec![0.0; self.values.len()];
                for (e, &s) in self.slot.iter().enumerate() {
                    ax[s] = self.values[e];
                }
                let signs: Vec<f64> = perm.iter().map(|&i| self.signs[i]).collect();
                ldl.factor(pattern, &ax, &signs, eps, delta)
            }
            Factor::Dense { ldl, matrix } => {
                matrix.fill(0.0);
                let dim = self.dim;
                for (e, &s) in self.slot.iter().enumerate() {
                    let (r, c) = (s / dim, s % dim);
                    matrix[r * dim + c] = self.values[e];
                    matrix[c * dim + r] = self.values[e];
                }
                ldl.factor(matrix, &self.signs, eps, delta)
            }
        };
    }

    fn raw_solve(&mut self, rhs: &mut [f64]) {
        match &self.factor {
            Factor::Sparse { ldl, perm, pinv, .. } => {
                for (k, &i) in perm.iter().enumerate() {
                    self.work[k] = rhs[i];
                }
                ldl.solve_in_place(&mut self.work);
                for (i, &k) in pinv.iter().enumerate() {
                    rhs[i] = self.work[k];
                }
            }
            Factor::Dense { ldl, .. } => ldl.solve_in_place(rhs),
        }
    }

    /// Solves against the unregularized operator, refining the solution
    /// obtained from the regularized factorization.
    pub fn solve(&mut self, a: &Csc, g: &Csc, cones: &ConeSpec, w: Option<&NtScaling>, rhs: &[f64], sol: &mut [f64]) {
        sol.copy_from_slice(rhs);
        self.raw_solve(sol);
        let tol = 1e-14 * (1.0 + inf_norm(rhs));
        let mut resid = vec![0.0; self.dim];
        let mut best = f64::INFINITY;
        for _ in 0..self.refine_steps {
            self.apply(a, g, cones, w, sol, &mut resid);
            for (r, b) in resid.iter_mut().zip(rhs) {
                *r = b - *r;
            }
            let norm = inf_norm(&resid);
            if norm <= tol || norm >= best {
                break;
            }
            best = norm;
            let mut corr = std::mem::take(&mut self.corr);
            corr.copy_from_slice(&resid);
            self.raw_solve(&mut corr);
            for (s, c) in sol.iter_mut().zip(&corr) {
                *s += c;
            }
            self.corr = corr;
        }
    }

    /// `out = K v` with `K` the unregularized KKT operator.
    fn apply(&self, a: &Csc, g: &Csc, cones: &ConeSpec, w: Option<&NtScaling>, v: &[f64], out: &mut [f64]) {
        let (n, p, m) = (self.n, self.p, self.m);
        out.fill(0.0);
        let (vx, rest) = v.split_at(n);
        let (vy, vz) = rest.split_at(p);
        {
            let (ox, rest) = out.split_at_mut(n);
            let (oy, oz) = rest.split_at_mut(p);
            a.mul_t_add(vy, ox);
            g.mul_t_add(vz, ox);
            a.mul_add(vx, oy);
            g.mul_add(vx, oz);
            match w {
                None => {
                    for (o, z) in oz.iter_mut().zip(vz) {
                        *o -= z;
                    }
                }
                Some(w) => {
                    let mut t1 = vec![0.0; m];
                    let mut t2 = vec![0.0; m];
                    w.apply(cones, vz, &mut t1);
                    w.apply(cones, &t1, &mut t2);
                    for (o, z) in oz.iter_mut().zip(&t2) {
                        *o -= z;
                    }
                }
            }
        }
    }
}
