//! Reference solvers used to check the interior-point method.

use gridmpc::socp::{sparse_from_triplets, ConeBlock, ConicProgram};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small LP `min cᵀx, Ax ≤ b, Ex = e` kept as dense rows.
#[derive(Debug, Clone)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub ineq: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
}

impl DenseLp {
    /// Feasible by construction (contains a known interior point) and bounded
    /// by the box rows `−5 ≤ x ≤ 5`.
    pub fn random(seed: u64, n: usize, m: usize, n_eq: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut ineq = Vec::new();
        for _ in 0..m {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = dotv(&a, &x0) + rng.random_range(0.1..1.5);
            ineq.push((a, b));
        }
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            ineq.push((e.clone(), 5.0));
            e[j] = -1.0;
            ineq.push((e, 5.0));
        }
        let eq = (0..n_eq)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let b = dotv(&a, &x0);
                (a, b)
            })
            .collect();
        let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { c, ineq, eq }
    }

    pub fn to_program(&self) -> ConicProgram {
        let n = self.c.len();
        let mut p = ConicProgram::new(n);
        p.cost = self.c.clone();
        let trip = |rows: &[(Vec<f64>, f64)]| {
            let t: Vec<_> = rows
                .iter()
                .enumerate()
                .flat_map(|(i, (a, _))| {
                    a.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(move |(j, &v)| (i, j, v))
                })
                .collect();
            (
                sparse_from_triplets(rows.len(), n, &t),
                rows.iter().map(|r| r.1).collect::<Vec<_>>(),
            )
        };
        (p.ineq, p.ineq_rhs) = trip(&self.ineq);
        (p.eq, p.eq_rhs) = trip(&self.eq);
        p
    }

    /// Exhaustive vertex enumeration: every choice of `n − p` inequality rows
    /// made active together with all equalities.
    pub fn vertex_optimum(&self) -> Option<f64> {
        let n = self.c.len();
        let k = n - self.eq.len();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..k).collect();
        let m = self.ineq.len();
        loop {
            let rows: Vec<&(Vec<f64>, f64)> = self.eq.iter().chain(idx.iter().map(|&i| &self.ineq[i])).collect();
            let a = DMatrix::from_fn(n, n, |r, c| rows[r].0[c]);
            let b = DVector::from_fn(n, |r, _| rows[r].1);
            if let Some(x) = a.clone().lu().solve(&b) {
                let resid = (&a * &x - &b).amax();
                let feasible = resid < 1e-9
                    && self.ineq.iter().all(|(r, bb)| dotv(r, x.as_slice()) <= bb + 1e-9)
                    && self.eq.iter().all(|(r, bb)| (dotv(r, x.as_slice()) - bb).abs() <= 1e-9);
                if feasible {
                    let obj = dotv(&self.c, x.as_slice());
                    best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                }
            }
            // next combination
            let mut i = k;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < m - k + i {
                    idx[i] += 1;
                    for j in i + 1..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

/// One two-variable piece of a separable SOCP:
/// `min cᵀx s.t. ‖M x − m‖ ≤ dᵀx − γ, x ∈ [−1, 1]²`.
#[derive(Debug, Clone)]
pub struct SocPiece {
    pub c: [f64; 2],
    pub m: [[f64; 2]; 2],
    pub m0: [f64; 2],
    pub d: [f64; 2],
    pub gamma: f64,
}

impl SocPiece {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let x0 = [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
        let mut r = || rng.random_range(-1.0..1.0);
        let m = [[r(), r()], [r(), r()]];
        let m0 = [r(), r()];
        let d = [r() * 0.5, r() * 0.5];
        let c = [r(), r()];
        let mut piece = Self {
            c,
            m,
            m0,
            d,
            gamma: 0.0,
        };
        piece.gamma = d[0] * x0[0] + d[1] * x0[1] - piece.cone_norm(x0) - 0.3;
        piece
    }

    fn cone_norm(&self, x: [f64; 2]) -> f64 {
        let r0 = self.m[0][0] * x[0] + self.m[0][1] * x[1] - self.m0[0];
        let r1 = self.m[1][0] * x[0] + self.m[1][1] * x[1] - self.m0[1];
        (r0 * r0 + r1 * r1).sqrt()
    }

    pub fn feasible(&self, x: [f64; 2]) -> bool {
        self.cone_norm(x) <= self.d[0] * x[0] + self.d[1] * x[1] - self.gamma
    }

    pub fn objective(&self, x: [f64; 2]) -> f64 {
        self.c[0] * x[0] + self.c[1] * x[1]
    }

    /// Grid scan: 0.01 over the whole box, then 0.001 around the best point.
    /// Valid because the feasible set is convex and the objective linear.
    pub fn grid_optimum(&self) -> f64 {
        let scan = |lo: [f64; 2], hi: [f64; 2], h: f64| {
            let mut best: Option<(f64, [f64; 2])> = None;
            let nx = ((hi[0] - lo[0]) / h).round() as usize;
            let ny = ((hi[1] - lo[1]) / h).round() as usize;
            for i in 0..=nx {
                for j in 0..=ny {
                    let x = [lo[0] + i as f64 * h, lo[1] + j as f64 * h];
                    if self.feasible(x) {
                        let f = self.objective(x);
                        if best.is_none_or(|(b, _)| f < b) {
                            best = Some((f, x));
                        }
                    }
                }
            }
            best
        };
        let (_, x) = scan([-1.0, -1.0], [1.0, 1.0], 0.01).expect("piece has an interior point");
        let lo = [(x[0] - 0.02).max(-1.0), (x[1] - 0.02).max(-1.0)];
        let hi = [(x[0] + 0.02).min(1.0), (x[1] + 0.02).min(1.0)];
        scan(lo, hi, 0.001).expect("refinement contains the coarse point").0
    }
}

/// Separable SOCP built from `pieces`; variables `2k, 2k+1` belong to piece `k`.
pub fn separable_socp(pieces: &[SocPiece]) -> ConicProgram {
    let n = 2 * pieces.len();
    let mut p = ConicProgram::new(n);
    p.lower = vec![-1.0; n];
    p.upper = vec![1.0; n];
    for (k, pc) in pieces.iter().enumerate() {
        let (a, b) = (2 * k, 2 * k + 1);
        p.cost[a] = pc.c[0];
        p.cost[b] = pc.c[1];
        let trip = [
            (0, a, pc.m[0][0]),
            (0, b, pc.m[0][1]),
            (1, a, pc.m[1][0]),
            (1, b, pc.m[1][1]),
        ];
        p.cones.push(ConeBlock::from_triplets(
            n,
            &trip,
            pc.m0.to_vec(),
            &[(a, pc.d[0]), (b, pc.d[1])],
            pc.gamma,
        ));
    }
    p
}

pub fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
