//! Primal-dual interior-point solver for second-order cone programs.
//!
//! Programs are stated over a single decision vector `u`:
//!
//! ```text
//! minimize    fᵀu
//! subject to  l ≤ u ≤ ub
//!             A_ineq u ≤ b_ineq
//!             A_eq u = b_eq
//!             ‖A_k u − b_k‖₂ ≤ d_kᵀu − γ_k      for every cone block k
//! ```

mod cone;
mod csc;
mod dump;
mod ipm;
mod kkt;
mod ldl;
mod ordering;
mod residuals;

use serde::{Deserialize, Serialize};
use sprs::{CsMat, CsVec, TriMat};
use thiserror::Error;

pub use dump::{dump_program, load_program, DumpError};
pub use ipm::solve;
pub use residuals::{kkt_residuals, KktResiduals};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("{block}: expected {expected} columns, found {found}")]
    ColumnMismatch {
        block: String,
        expected: usize,
        found: usize,
    },
    #[error("{block}: expected {expected} rows, found {found}")]
    RowMismatch {
        block: String,
        expected: usize,
        found: usize,
    },
    #[error("bounds inverted at variable {index}: {lower} > {upper}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("cone block {0} has no rows")]
    EmptyCone(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// `‖a u − b‖₂ ≤ dᵀu − gamma`
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub a: CsMat<f64>,
    pub b: Vec<f64>,
    pub d: CsVec<f64>,
    pub gamma: f64,
}

impl ConeBlock {
    pub fn from_triplets(n: usize, a: &[(usize, usize, f64)], b: Vec<f64>, d: &[(usize, f64)], gamma: f64) -> Self {
        let mut tri = TriMat::new((b.len(), n));
        for &(r, c, v) in a {
            tri.add_triplet(r, c, v);
        }
        let mut d = d.to_vec();
        d.sort_by_key(|e| e.0);
        let (idx, val): (Vec<_>, Vec<_>) = d.into_iter().unzip();
        Self {
            a: tri.to_csr(),
            b,
            d: CsVec::new(n, idx, val),
            gamma,
        }
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub ineq: CsMat<f64>,
    pub ineq_rhs: Vec<f64>,
    pub eq: CsMat<f64>,
    pub eq_rhs: Vec<f64>,
    pub cones: Vec<ConeBlock>,
}

pub fn sparse_from_triplets(rows: usize, cols: usize, t: &[(usize, usize, f64)]) -> CsMat<f64> {
    let mut tri = TriMat::new((rows, cols));
    for &(r, c, v) in t {
        tri.add_triplet(r, c, v);
    }
    tri.to_csr()
}

impl ConicProgram {
    /// A program with `n` free variables, zero cost and no constraints.
    pub fn new(n: usize) -> Self {
        Self {
            cost: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            ineq: CsMat::zero((0, n)),
            ineq_rhs: Vec::new(),
            eq: CsMat::zero((0, n)),
            eq_rhs: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let n = self.n_vars();
        let cols = |block: &str, found: usize| {
            if found == n {
                Ok(())
            } else {
                Err(ProgramError::ColumnMismatch {
                    block: block.into(),
                    expected: n,
                    found,
                })
            }
        };
        let rows = |block: &str, expected: usize, found: usize| {
            if found == expected {
                Ok(())
            } else {
                Err(ProgramError::RowMismatch {
                    block: block.into(),
                    expected,
                    found,
                })
            }
        };
        cols("lower", self.lower.len())?;
        cols("upper", self.upper.len())?;
        cols("ineq", self.ineq.cols())?;
        cols("eq", self.eq.cols())?;
        rows("ineq", self.ineq.rows(), self.ineq_rhs.len())?;
        rows("eq", self.eq.rows(), self.eq_rhs.len())?;
        for (k, c) in self.cones.iter().enumerate() {
            let name = format!("cone {k}");
            cols(&name, c.a.cols())?;
            cols(&name, c.d.dim())?;
            rows(&name, c.a.rows(), c.b.len())?;
            if c.a.rows() == 0 {
                return Err(ProgramError::EmptyCone(k));
            }
        }
        for (i, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(ProgramError::NonFinite("bounds".into()));
            }
            if l > u {
                return Err(ProgramError::InvertedBounds {
                    index: i,
                    lower: l,
                    upper: u,
                });
            }
        }
        fn finite(name: &str, mut v: impl Iterator<Item = f64>) -> Result<(), ProgramError> {
            if v.all(f64::is_finite) {
                Ok(())
            } else {
                Err(ProgramError::NonFinite(name.into()))
            }
        }
        finite("cost", self.cost.iter().copied())?;
        finite("ineq", self.ineq.data().iter().chain(&self.ineq_rhs).copied())?;
        finite("eq", self.eq.data().iter().chain(&self.eq_rhs).copied())?;
        for c in &self.cones {
            finite(
                "cone",
                c.a.data()
                    .iter()
                    .chain(&c.b)
                    .chain(c.d.data())
                    .chain(std::iter::once(&c.gamma))
                    .copied(),
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feas: f64,
    pub gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feas: 1e-8, gap: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerances: Tolerances,
    pub max_iter: usize,
    /// Mehrotra predictor-corrector; when off, a single centered Newton step
    /// with `sigma` is taken per iteration.
    pub mehrotra: bool,
    pub sigma: f64,
    /// KKT systems with fewer unknowns than this use the dense factorization.
    pub dense_threshold: usize,
    pub equilibrate: bool,
    pub stall_iterations: usize,
    pub static_reg: f64,
    pub refine_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            max_iter: 200,
            mehrotra: true,
            sigma: 0.1,
            dense_threshold: 500,
            equilibrate: true,
            stall_iterations: 20,
            static_reg: 1e-8,
            refine_steps: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The search direction became non-finite away from the optimum.
    NumericalError,
}

/// Multipliers per constraint group. Signs follow the Lagrangian
/// `fᵀu + yᵀ(A_eq u − b_eq) + zᵀ(A_ineq u − b_ineq) + z_lᵀ(l − u) + z_uᵀ(u − ub)
///  − Σ_k (t_k (d_kᵀu − γ_k) + w_kᵀ(A_k u − b_k))` with `z, z_l, z_u ≥ 0` and
/// `(t_k, w_k)` in the second-order cone.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cones: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub u_star: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub duality_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub status: SolveStatus,
    pub duals: Duals,
    /// Median wall time of one interior-point iteration, seconds.
    pub per_iteration_time: f64,
    pub solve_time: f64,
    pub kkt_dim: usize,
    pub factor_nnz: usize,
}

impl SolverResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
