//! Multi-start multi-step (MSMS) hyperparameter selection.
//!
//! For every `(σ, λ)` candidate and every fold (a contiguous block of held-out
//! days), the model is fitted on the remaining days and rolled out `horizon`
//! steps from `starts` evenly spaced points of the held-out series. The score
//! is the mean squared relative rollout error over folds, starts and steps.

use serde::{Deserialize, Serialize};

use super::krr::{build_samples, fit_krr};
use super::ForecastError;

/// Values with magnitude below this are excluded from the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsmsConfig {
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub folds: usize,
    pub starts: usize,
    pub horizon: usize,
}

impl Default for MsmsConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            lambdas: vec![1e-6, 1e-4, 1e-2, 1e-1],
            folds: 3,
            starts: 4,
            horizon: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsmsResult {
    pub sigma: f64,
    pub lambda: f64,
    pub score: f64,
}

/// Exhaustive grid search; ties keep the first candidate in `(σ, λ)` order.
pub fn msms_tune(
    days: &[Vec<f64>],
    lag: usize,
    steps_per_day: usize,
    cfg: &MsmsConfig,
) -> Result<MsmsResult, ForecastError> {
    if cfg.sigmas.is_empty() || cfg.lambdas.is_empty() {
        return Err(ForecastError::EmptyGrid);
    }
    if cfg.folds == 0 || days.len() < cfg.folds + 1 || cfg.starts == 0 || cfg.horizon == 0 {
        return Err(ForecastError::InsufficientData {
            days: days.len(),
            folds: cfg.folds,
        });
    }
    let mut best: Option<MsmsResult> = None;
    for &sigma in &cfg.sigmas {
        for &lambda in &cfg.lambdas {
            let score = msms_score(days, lag, steps_per_day, cfg, sigma, lambda)?;
            if best.is_none_or(|b| score < b.score) {
                best = Some(MsmsResult { sigma, lambda, score });
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// MSMS objective for one candidate. Candidates whose fit fails score +∞.
pub fn msms_score(
    days: &[Vec<f64>],
    lag: usize,
    steps_per_day: usize,
    cfg: &MsmsConfig,
    sigma: f64,
    lambda: f64,
) -> Result<f64, ForecastError> {
    let n_days = days.len();
    let block = n_days / cfg.folds;
    let mut total = 0.0;
    let mut count = 0usize;
    for fold in 0..cfg.folds {
        let test = fold * block..if fold + 1 == cfg.folds {
            n_days
        } else {
            (fold + 1) * block
        };
        let mut samples = Vec::new();
        // Train on the blocks before and after the held-out one separately so
        // no window straddles the gap.
        for part in [&days[..test.start], &days[test.end..]] {
            if !part.is_empty() {
                samples.extend(build_samples(part, lag, steps_per_day));
            }
        }
        if samples.is_empty() {
            return Err(ForecastError::InsufficientData {
                days: n_days,
                folds: cfg.folds,
            });
        }
        let model = match fit_krr(&samples, sigma, lambda) {
            Ok(m) => m,
            Err(ForecastError::SingularGram) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        let series: Vec<f64> = days[test.clone()].iter().flatten().copied().collect();
        let first = lag;
        let last = series.len().saturating_sub(cfg.horizon);
        if last < first {
            return Err(ForecastError::InsufficientData {
                days: n_days,
                folds: cfg.folds,
            });
        }
        for s in 0..cfg.starts {
            let start = if cfg.starts == 1 {
                first
            } else {
                first + (last - first) * s / (cfg.starts - 1)
            };
            let abs_step = test.start * steps_per_day + start - 1;
            let pred = model.rollout(&series[start - lag..start], abs_step, cfg.horizon, steps_per_day)?;
            let mut sum = 0.0;
            let mut terms = 0usize;
            for (k, p) in pred.iter().enumerate() {
                let x = series[start + k];
                if x.abs() < RELATIVE_FLOOR {
                    continue;
                }
                sum += ((p - x) / x).powi(2);
                terms += 1;
            }
            if terms > 0 {
                total += sum / terms as f64;
                count += 1;
            }
        }
    }
    Ok(if count == 0 {
        f64::INFINITY
    } else {
        total / count as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_days(n: usize, spd: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..spd)
                    .map(|k| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * k as f64 / spd as f64).sin())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_candidate_is_returned() {
        let days = smooth_days(4, 24);
        let cfg = MsmsConfig {
            sigmas: vec![0.3],
            lambdas: vec![1e-3],
            ..Default::default()
        };
        let r = msms_tune(&days, 3, 24, &cfg).unwrap();
        assert_eq!((r.sigma, r.lambda), (0.3, 1e-3));
        assert_eq!(r.score, msms_score(&days, 3, 24, &cfg, 0.3, 1e-3).unwrap());
    }

    #[test]
    fn interpolating_candidate_beats_oversmoothed() {
        let days = smooth_days(4, 24);
        let cfg = MsmsConfig {
            sigmas: vec![0.3],
            lambdas: vec![1e3, 1e-6],
            ..Default::default()
        };
        let good = msms_score(&days, 3, 24, &cfg, 0.3, 1e-6).unwrap();
        let bad = msms_score(&days, 3, 24, &cfg, 0.3, 1e3).unwrap();
        assert!(good < bad);
        let r = msms_tune(&days, 3, 24, &cfg).unwrap();
        assert_eq!(r.lambda, 1e-6);
    }

    #[test]
    fn empty_grid_and_short_data_fail() {
        let days = smooth_days(4, 24);
        let cfg = MsmsConfig {
            sigmas: vec![],
            ..Default::default()
        };
        assert_eq!(msms_tune(&days, 3, 24, &cfg), Err(ForecastError::EmptyGrid));
        assert!(msms_tune(&days[..2], 3, 24, &MsmsConfig::default()).is_err());
    }
}
