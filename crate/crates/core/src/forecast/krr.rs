//! Auto-regressive kernel ridge regression on power increments.
//!
//! An input is the last `lag` values of a series plus the normalized time of
//! day `t_n ∈ [0, 1)`; the label is the increment to the next value.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ForecastError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub window: Vec<f64>,
    pub t: f64,
    pub delta: f64,
}

impl Sample {
    fn input(&self) -> Vec<f64> {
        let mut x = self.window.clone();
        x.push(self.t);
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    /// One row per training sample: `[window; t]`.
    pub inputs: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub lag: usize,
}

pub fn gaussian_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

pub fn gram_matrix(inputs: &[Vec<f64>], sigma: f64) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = gaussian_kernel(&inputs[i], &inputs[j], sigma);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Solves `(K + λI) w = y`. The residual is checked against `1e-10·‖y‖` after
/// one step of refinement; failure means the system is numerically singular.
pub fn fit_krr(samples: &[Sample], sigma: f64, lambda: f64) -> Result<KrrModel, ForecastError> {
    let first = samples.first().ok_or(ForecastError::NoSamples)?;
    if !(sigma > 0.0) || !(lambda >= 0.0) {
        return Err(ForecastError::BadHyperparameters { sigma, lambda });
    }
    let lag = first.window.len();
    if lag == 0 || samples.iter().any(|s| s.window.len() != lag) {
        return Err(ForecastError::WindowLength {
            expected: lag.max(1),
            found: samples.iter().map(|s| s.window.len()).find(|&l| l != lag).unwrap_or(0),
        });
    }
    let inputs: Vec<Vec<f64>> = samples.iter().map(Sample::input).collect();
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.delta));
    let mut k = gram_matrix(&inputs, sigma);
    for i in 0..samples.len() {
        k[(i, i)] += lambda;
    }
    let w = solve_spd(&k, &y).ok_or(ForecastError::SingularGram)?;
    Ok(KrrModel {
        inputs,
        weights: w.iter().copied().collect(),
        sigma,
        lambda,
        lag,
    })
}

fn solve_spd(k: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let tol = 1e-10 * y.norm().max(f64::MIN_POSITIVE);
    let refine = |mut w: DVector<f64>, solve: &dyn Fn(&DVector<f64>) -> Option<DVector<f64>>| {
        let r = y - k * &w;
        if r.norm() > tol {
            w += solve(&r)?;
        }
        ((y - k * &w).norm() <= tol || y.norm() == 0.0).then_some(w)
    };
    if let Some(ch) = k.clone().cholesky() {
        let w = ch.solve(y);
        if let Some(w) = refine(w, &|r| Some(ch.solve(r))) {
            return Some(w);
        }
    }
    let lu = k.clone().lu();
    let w = lu.solve(y)?;
    if w.iter().any(|x| !x.is_finite()) {
        return None;
    }
    refine(w, &|r| lu.solve(r))
}

impl KrrModel {
    pub fn predict_increment(&self, window: &[f64], t: f64) -> Result<f64, ForecastError> {
        if window.len() != self.lag {
            return Err(ForecastError::WindowLength {
                expected: self.lag,
                found: window.len(),
            });
        }
        let mut x = window.to_vec();
        x.push(t);
        Ok(self
            .inputs
            .iter()
            .zip(&self.weights)
            .map(|(xi, w)| w * gaussian_kernel(xi, &x, self.sigma))
            .sum())
    }

    /// Rolls the model forward `n` steps from `window` (oldest first), whose
    /// last value sits at absolute step `step`. Returns the `n` predicted values.
    pub fn rollout(
        &self,
        window: &[f64],
        step: usize,
        n: usize,
        steps_per_day: usize,
    ) -> Result<Vec<f64>, ForecastError> {
        self.rollout_within(window, step, n, steps_per_day, (f64::NEG_INFINITY, f64::INFINITY))
    }

    /// As [`KrrModel::rollout`], saturating every predicted value to `range`
    /// before it re-enters the window.
    pub fn rollout_within(
        &self,
        window: &[f64],
        step: usize,
        n: usize,
        steps_per_day: usize,
        range: (f64, f64),
    ) -> Result<Vec<f64>, ForecastError> {
        let mut w = window.to_vec();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let t = time_of_day(step + k, steps_per_day);
            let last = *w.last().ok_or(ForecastError::WindowLength {
                expected: self.lag,
                found: 0,
            })?;
            let next = (last + self.predict_increment(&w, t)?).clamp(range.0, range.1);
            out.push(next);
            w.remove(0);
            w.push(next);
        }
        Ok(out)
    }
}

pub fn time_of_day(step: usize, steps_per_day: usize) -> f64 {
    (step % steps_per_day) as f64 / steps_per_day as f64
}

/// Sliding-window samples over consecutive days treated as one series.
pub fn build_samples(days: &[Vec<f64>], lag: usize, steps_per_day: usize) -> Vec<Sample> {
    let series: Vec<f64> = days.iter().flatten().copied().collect();
    (lag..series.len())
        .map(|m| {
            let n = m - 1;
            Sample {
                window: series[m - lag..m].to_vec(),
                t: time_of_day(n, steps_per_day),
                delta: series[m] - series[n],
            }
        })
        .collect()
}
