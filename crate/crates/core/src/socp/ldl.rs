//! LDLᵀ factorizations for quasi-definite systems.
//!
//! Neither factorization pivots. Each pivot has an expected sign; a pivot
//! with the wrong sign or tiny magnitude is replaced by `sign · delta`
//! (dynamic regularization), and iterative refinement in the caller
//! recovers the accuracy lost to it.

const NONE: usize = usize::MAX;

/// Upper-triangular CSC pattern with every diagonal entry present.
#[derive(Debug, Clone)]
pub(crate) struct UpperCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct SparseLdl {
    n: usize,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    // numeric workspace
    y_vals: Vec<f64>,
    y_used: Vec<bool>,
    y_idx: Vec<usize>,
    elim: Vec<usize>,
    next: Vec<usize>,
}

impl SparseLdl {
    pub fn symbolic(a: &UpperCsc) -> Self {
        let n = a.n;
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in a.colptr[j]..a.colptr[j + 1] {
                let mut i = a.rowidx[p];
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let nnz = lp[n];
        Self {
            n,
            etree,
            lp,
            li: vec![0; nnz],
            lx: vec![0.0; nnz],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            y_vals: vec![0.0; n],
            y_used: vec![false; n],
            y_idx: vec![0; n],
            elim: vec![0; n],
            next: vec![0; n],
        }
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization of the matrix with pattern `a` and values `ax`.
    /// Returns the number of regularized pivots.
    pub fn factor(&mut self, a: &UpperCsc, ax: &[f64], signs: &[f64], eps: f64, delta: f64) -> usize {
        let n = self.n;
        let mut n_reg = 0;
        self.next.copy_from_slice(&self.lp[..n]);
        for k in 0..n {
            let mut n_y = 0;
            self.d[k] = 0.0;
            for p in a.colptr[k]..a.colptr[k + 1] {
                let b = a.rowidx[p];
                if b == k {
                    self.d[k] = ax[p];
                    continue;
                }
                self.y_vals[b] = ax[p];
                if !self.y_used[b] {
                    self.y_used[b] = true;
                    self.elim[0] = b;
                    let mut n_e = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if self.y_used[nx] {
                            break;
                        }
                        self.y_used[nx] = true;
                        self.elim[n_e] = nx;
                        n_e += 1;
                        nx = self.etree[nx];
                    }
                    while n_e > 0 {
                        n_e -= 1;
                        self.y_idx[n_y] = self.elim[n_e];
                        n_y += 1;
                    }
                }
            }
            for i in (0..n_y).rev() {
                let c = self.y_idx[i];
                let end = self.next[c];
                let yc = self.y_vals[c];
                for j in self.lp[c]..end {
                    self.y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                let l = yc * self.dinv[c];
                self.lx[end] = l;
                self.d[k] -= yc * l;
                self.next[c] += 1;
                self.y_vals[c] = 0.0;
                self.y_used[c] = false;
            }
            if self.d[k] * signs[k] <= eps {
                self.d[k] = signs[k] * delta;
                n_reg += 1;
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        n_reg
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..self.n {
            x[i] *= self.dinv[i];
        }
        for i in (0..self.n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
    }
}

/// Dense LDLᵀ without pivoting, column-major lower storage.
#[derive(Debug, Clone)]
pub(crate) struct DenseLdl {
    n: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl DenseLdl {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            l: vec![0.0; n * n],
            d: vec![0.0; n],
        }
    }

    /// `m` is the full symmetric matrix in row-major order.
    pub fn factor(&mut self, m: &[f64], signs: &[f64], eps: f64, delta: f64) -> usize {
        let n = self.n;
        let mut n_reg = 0;
        self.l.fill(0.0);
        for j in 0..n {
            let mut dj = m[j * n + j];
            for k in 0..j {
                let ljk = self.l[k * n + j];
                dj -= ljk * ljk * self.d[k];
            }
            if dj * signs[j] <= eps {
                dj = signs[j] * delta;
                n_reg += 1;
            }
            self.d[j] = dj;
            self.l[j * n + j] = 1.0;
            for i in j + 1..n {
                let mut v = m[i * n + j];
                for k in 0..j {
                    v -= self.l[k * n + i] * self.l[k * n + j] * self.d[k];
                }
                self.l[j * n + i] = v / dj;
            }
        }
        n_reg
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let xj = x[j];
            for i in j + 1..n {
                x[i] -= self.l[j * n + i] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for i in j + 1..n {
                xj -= self.l[j * n + i] * x[i];
            }
            x[j] = xj;
        }
    }
}
