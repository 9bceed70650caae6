//! Multi-step solar forecast accuracy from several start times.

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::forecast::{fit_family, solar_rollout, ForecastConfig, ForecastError, ProfileDictionary};

/// Error of each method over one rollout, RMSE in normalized units (per unit
/// of rating).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEvalRow {
    pub start_step: usize,
    pub start_h: f64,
    pub steps: usize,
    pub nrmse_krr: f64,
    pub nrmse_dictionary: f64,
    pub nrmse_persistence: f64,
}

/// Forecast trajectories from one start, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTrajectory {
    pub start_step: usize,
    pub realized: Vec<f64>,
    pub krr: Vec<f64>,
    pub dictionary: Vec<f64>,
    pub persistence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEvalReport {
    pub steps_per_day: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub rows: Vec<ForecastEvalRow>,
    #[serde(skip)]
    pub trajectories: Vec<ForecastTrajectory>,
}

impl ForecastEvalReport {
    /// `start_step,step,time_h,realized,krr,dictionary,persistence` rows.
    pub fn trajectories_csv(&self) -> String {
        let mut out = String::from("start_step,step,time_h,realized,krr,dictionary,persistence\n");
        let dt = 24.0 / self.steps_per_day as f64;
        for t in &self.trajectories {
            for i in 0..t.realized.len() {
                let step = t.start_step + 1 + i;
                out.push_str(&format!(
                    "{},{},{:.4},{:.9},{:.9},{:.9},{:.9}\n",
                    t.start_step,
                    step,
                    step as f64 * dt,
                    t.realized[i],
                    t.krr[i],
                    t.dictionary[i],
                    t.persistence[i]
                ));
            }
        }
        out
    }
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Rolls the vanilla KRR, the dictionary-anchored KRR and persistence
/// forward from each start step to the end of the realized day. `history`
/// trains the model and supplies the window before midnight; every profile
/// is normalized to its rating.
pub fn forecast_eval(
    history: &[Vec<f64>],
    realized: &[f64],
    dictionary: &ProfileDictionary,
    config: &ForecastConfig,
    starts: &[usize],
) -> Result<ForecastEvalReport, ExperimentError> {
    let spd = realized.len();
    if history.len() < 2 {
        return Err(ForecastError::InsufficientData {
            days: history.len(),
            folds: 1,
        }
        .into());
    }
    if history.iter().any(|d| d.len() != spd) || dictionary.steps_per_day() != spd {
        return Err(ExperimentError::Invalid("profiles must share one daily grid".into()));
    }
    let lag = config.lag;
    if lag == 0 || lag > spd {
        return Err(ExperimentError::Invalid(format!(
            "lag {lag} does not fit a {spd}-step day"
        )));
    }
    let fitted = fit_family(history, spd, config)?;
    let model = &fitted.model;
    let previous = history.last().expect("at least two history days");
    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    for &s in starts {
        if s + 1 >= spd {
            continue;
        }
        let window: Vec<f64> = (s as isize + 1 - lag as isize..=s as isize)
            .map(|i| {
                if i < 0 {
                    previous[(spd as isize + i) as usize]
                } else {
                    realized[i as usize]
                }
            })
            .collect();
        let n = spd - 1 - s;
        let truth = realized[s + 1..].to_vec();
        let krr = model.rollout_within(&window, s, n, spd, (0.0, 1.0))?;
        let dict = solar_rollout(model, dictionary, &window, s, n, config.anchor)?;
        let persistence = vec![realized[s]; n];
        rows.push(ForecastEvalRow {
            start_step: s,
            start_h: s as f64 * 24.0 / spd as f64,
            steps: n,
            nrmse_krr: rmse(&krr, &truth),
            nrmse_dictionary: rmse(&dict, &truth),
            nrmse_persistence: rmse(&persistence, &truth),
        });
        trajectories.push(ForecastTrajectory {
            start_step: s,
            realized: truth,
            krr,
            dictionary: dict,
            persistence,
        });
    }
    Ok(ForecastEvalReport {
        steps_per_day: spd,
        sigma: fitted.tuning.sigma,
        lambda: fitted.tuning.lambda,
        rows,
        trajectories,
    })
}
