//! Cone algebra for `R+^m × Q^{q1} × ... × Q^{qk}`: Jordan products,
//! Nesterov-Todd scaling and step-length computation.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConeSpec {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeSpec {
    /// Barrier degree: one per nonnegative coordinate and one per cone.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// `(start, len)` of every second-order cone block.
    pub fn soc_ranges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut start = self.nonneg;
        self.soc.iter().map(move |&q| {
            let r = (start, q);
            start += q;
            r
        })
    }
}

fn soc_det(v: &[f64]) -> f64 {
    let tail: f64 = v[1..].iter().map(|x| x * x).sum();
    v[0] * v[0] - tail
}

/// Smallest "eigenvalue" of `v` with respect to the cone; positive iff `v` is
/// in the interior.
pub(crate) fn min_eig(spec: &ConeSpec, v: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for &x in &v[..spec.nonneg] {
        m = m.min(x);
    }
    for (st, q) in spec.soc_ranges() {
        let tail = v[st + 1..st + q].iter().map(|x| x * x).sum::<f64>().sqrt();
        m = m.min(v[st] - tail);
    }
    m
}

/// Adds `a · e` where `e` is the cone identity.
pub(crate) fn add_identity(spec: &ConeSpec, v: &mut [f64], a: f64) {
    for x in &mut v[..spec.nonneg] {
        *x += a;
    }
    for (st, _) in spec.soc_ranges() {
        v[st] += a;
    }
}

pub(crate) fn jordan_product(spec: &ConeSpec, u: &[f64], v: &[f64], out: &mut [f64]) {
    for i in 0..spec.nonneg {
        out[i] = u[i] * v[i];
    }
    for (st, q) in spec.soc_ranges() {
        let (u, v) = (&u[st..st + q], &v[st..st + q]);
        out[st] = u.iter().zip(v).map(|(a, b)| a * b).sum();
        for k in 1..q {
            out[st + k] = u[0] * v[k] + v[0] * u[k];
        }
    }
}

/// Solves `λ ∘ x = r` for `x`.
pub(crate) fn jordan_div(spec: &ConeSpec, lambda: &[f64], r: &[f64], out: &mut [f64]) {
    for i in 0..spec.nonneg {
        out[i] = r[i] / lambda[i];
    }
    for (st, q) in spec.soc_ranges() {
        let (l, r) = (&lambda[st..st + q], &r[st..st + q]);
        let det = soc_det(l);
        let dot: f64 = l[1..].iter().zip(&r[1..]).map(|(a, b)| a * b).sum();
        let x0 = (l[0] * r[0] - dot) / det;
        out[st] = x0;
        for k in 1..q {
            out[st + k] = (r[k] - x0 * l[k]) / l[0];
        }
    }
}

#[derive(Debug, Clone)]
struct SocScaling {
    eta: f64,
    /// `w̄ = [a; q]` with `a² − ‖q‖² = 1`.
    w: Vec<f64>,
}

/// Nesterov-Todd scaling `W` with `W z = W⁻¹ s = λ`.
#[derive(Debug, Clone)]
pub(crate) struct NtScaling {
    nonneg: Vec<f64>,
    soc: Vec<SocScaling>,
}

impl NtScaling {
    pub fn new(spec: &ConeSpec, s: &[f64], z: &[f64]) -> Self {
        let nonneg = (0..spec.nonneg).map(|i| (s[i] / z[i]).sqrt()).collect();
        let soc = spec
            .soc_ranges()
            .map(|(st, q)| {
                let (s, z) = (&s[st..st + q], &z[st..st + q]);
                let sn = soc_det(s).max(f64::MIN_POSITIVE).sqrt();
                let zn = soc_det(z).max(f64::MIN_POSITIVE).sqrt();
                let sb: Vec<f64> = s.iter().map(|x| x / sn).collect();
                let zb: Vec<f64> = z.iter().map(|x| x / zn).collect();
                let dot: f64 = sb.iter().zip(&zb).map(|(a, b)| a * b).sum();
                let gamma = ((1.0 + dot) / 2.0).max(f64::MIN_POSITIVE).sqrt();
                let mut w = vec![0.0; q];
                w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
                for k in 1..q {
                    w[k] = (sb[k] - zb[k]) / (2.0 * gamma);
                }
                // Re-normalize against rounding so that a² − ‖q‖² = 1 exactly.
                let tail: f64 = w[1..].iter().map(|x| x * x).sum();
                w[0] = (1.0 + tail).sqrt();
                SocScaling {
                    eta: (sn / zn).sqrt(),
                    w,
                }
            })
            .collect();
        Self { nonneg, soc }
    }

    pub fn apply(&self, spec: &ConeSpec, v: &[f64], out: &mut [f64]) {
        self.apply_impl(spec, v, out, false);
    }

    pub fn apply_inv(&self, spec: &ConeSpec, v: &[f64], out: &mut [f64]) {
        self.apply_impl(spec, v, out, true);
    }

    fn apply_impl(&self, spec: &ConeSpec, v: &[f64], out: &mut [f64], inverse: bool) {
        for i in 0..spec.nonneg {
            out[i] = if inverse {
                v[i] / self.nonneg[i]
            } else {
                v[i] * self.nonneg[i]
            };
        }
        for ((st, q), sc) in spec.soc_ranges().zip(&self.soc) {
            let v = &v[st..st + q];
            let a = sc.w[0];
            let qv: f64 = sc.w[1..].iter().zip(&v[1..]).map(|(x, y)| x * y).sum();
            // W̄⁻¹ = J W̄ J flips the sign of the off-diagonal coupling.
            let sign = if inverse { -1.0 } else { 1.0 };
            let scale = if inverse { 1.0 / sc.eta } else { sc.eta };
            out[st] = scale * (a * v[0] + sign * qv);
            let coef = sign * v[0] + qv / (1.0 + a);
            for k in 1..q {
                out[st + k] = scale * (v[k] + coef * sc.w[k]);
            }
        }
    }

    /// Diagonal entries of `W²` for the nonnegative part.
    pub fn nonneg_sq(&self) -> impl Iterator<Item = f64> + '_ {
        self.nonneg.iter().map(|w| w * w)
    }

    /// Dense `W²` block (row-major, `q × q`) of the `k`-th cone.
    pub fn soc_sq(&self, k: usize, out: &mut Vec<f64>) {
        let sc = &self.soc[k];
        let q = sc.w.len();
        let e2 = sc.eta * sc.eta;
        out.clear();
        out.resize(q * q, 0.0);
        for i in 0..q {
            for j in 0..q {
                let mut v = 2.0 * sc.w[i] * sc.w[j];
                if i == j {
                    v += if i == 0 { -1.0 } else { 1.0 };
                }
                out[i * q + j] = e2 * v;
            }
        }
    }
}

/// Largest `α ∈ [0, 1]` such that `v + α dv` stays in the cone.
pub(crate) fn max_step(spec: &ConeSpec, v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..spec.nonneg {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    for (st, q) in spec.soc_ranges() {
        alpha = alpha.min(soc_max_step(&v[st..st + q], &dv[st..st + q]));
    }
    alpha.max(0.0)
}

fn soc_max_step(v: &[f64], d: &[f64]) -> f64 {
    // f(α) = (v0 + α d0)² − ‖v1 + α d1‖² = a α² + b α + c, with f(0) = c ≥ 0.
    let a = soc_det(d);
    let b = 2.0 * (v[0] * d[0] - v[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum::<f64>());
    let c = soc_det(v).max(0.0);
    let mut best = f64::INFINITY;
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return best;
    }
    if a.abs() <= 1e-14 * scale {
        if b < 0.0 {
            best = -c / b;
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let qq = -0.5 * (b + b.signum() * sq);
            for root in [qq / a, if qq != 0.0 { c / qq } else { f64::INFINITY }] {
                if root > 0.0 {
                    best = best.min(root);
                }
            }
        }
    }
    // The first root may sit on the mirrored branch where v0 + α d0 < 0.
    if d[0] < 0.0 {
        best = best.min(-v[0] / d[0]);
    }
    best
}
