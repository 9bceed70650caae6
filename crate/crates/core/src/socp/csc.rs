//! Minimal compressed-sparse-column storage used inside the solver.

use sprs::CsMat;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Csc {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csc {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.1, e.0));
        let mut colptr = vec![0; ncols + 1];
        let mut rowidx = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            rowidx.push(r);
            vals.push(v);
            colptr[c + 1] += 1;
            last = Some((r, c));
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        let mut m = Self {
            nrows,
            ncols,
            colptr,
            rowidx,
            vals,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        if self.vals.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut t = Vec::with_capacity(self.vals.len());
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                if self.vals[p] != 0.0 {
                    t.push((self.rowidx[p], c, self.vals[p]));
                }
            }
        }
        *self = Self::from_triplets(self.nrows, self.ncols, t);
    }

    pub fn from_sprs(m: &CsMat<f64>) -> Self {
        let t = m.iter().map(|(&v, (r, c))| (r, c, v)).collect();
        Self::from_triplets(m.rows(), m.cols(), t)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols)
            .flat_map(move |c| (self.colptr[c]..self.colptr[c + 1]).map(move |p| (self.rowidx[p], c, self.vals[p])))
    }

    /// `y += A x`
    pub fn mul_add(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowidx[p]] += self.vals[p] * xc;
            }
        }
    }

    /// `y += Aᵀ x`
    pub fn mul_t_add(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[c]..self.colptr[c + 1] {
                acc += self.vals[p] * x[self.rowidx[p]];
            }
            y[c] += acc;
        }
    }

    pub fn scale(&mut self, row: &[f64], col: &[f64]) {
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                self.vals[p] *= row[self.rowidx[p]] * col[c];
            }
        }
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
