//! Experiment drivers shared by the command-line tool and the test suite:
//! scenario runs, the complexity sweep and the forecast evaluation.

mod forecast_eval;
mod run;
mod sweep;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

pub use forecast_eval::{forecast_eval, ForecastEvalReport, ForecastEvalRow, ForecastTrajectory};
pub use run::{run_scenario, FamilyTuning, ModeResult, RunReport, RunRequest};
pub use sweep::{complexity_sweep, ComplexityReport, SweepCell, SweepRequest};

use crate::ems::EmsError;
use crate::forecast::ForecastError;
use crate::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Ems(#[from] EmsError),
    #[error("forecast: {0}")]
    Forecast(#[from] ForecastError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

impl ExperimentError {
    /// True when the failure lies in the inputs rather than in a solve.
    pub fn is_config_error(&self) -> bool {
        match self {
            ExperimentError::Scenario(_) | ExperimentError::Invalid(_) => true,
            ExperimentError::Ems(e) => {
                matches!(e, EmsError::Scenario(_) | EmsError::UnknownMode(_))
            }
            ExperimentError::Forecast(_) | ExperimentError::Io(_) => false,
        }
    }
}

/// Applies `f` to every item on up to `jobs` worker threads and returns the
/// results in input order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every item is processed"))
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Median of a sample; `NaN` when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 5.0, 40.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(0.5)))
            .collect();
        assert_abs_diff_eq!(loglog_slope(&pts).unwrap(), 0.5, epsilon = 1e-12);
        assert!(loglog_slope(&[(1.0, 1.0)]).is_none());
        assert!(loglog_slope(&[(2.0, 1.0), (2.0, 3.0)]).is_none());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..37).collect();
        for jobs in [1, 3, 8, 100] {
            assert_eq!(
                parallel_map(&items, jobs, |x| x * x),
                items.iter().map(|x| x * x).collect::<Vec<_>>()
            );
        }
        assert!(parallel_map(&Vec::<usize>::new(), 4, |x| *x).is_empty());
    }
}
