//! Dictionary-anchored solar forecasting.

use serde::{Deserialize, Serialize};

use super::krr::{time_of_day, KrrModel};
use super::ForecastError;

/// Hours from solar noon to the edge of the production window.
pub const DAYLIGHT_HALF_WIDTH: f64 = 6.0;
/// Standard deviation of the clear-sky bell, hours.
pub const BELL_WIDTH: f64 = 2.5;

/// Normalized clear-sky output at `hour` of day, peaking at 1 at noon and
/// zero outside the production window.
pub fn bell_shape(hour: f64) -> f64 {
    let d = hour - 12.0;
    if d.abs() >= DAYLIGHT_HALF_WIDTH {
        0.0
    } else {
        (-d * d / (2.0 * BELL_WIDTH * BELL_WIDTH)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDictionary {
    pub profiles: Vec<Vec<f64>>,
}

impl ProfileDictionary {
    pub fn new(profiles: Vec<Vec<f64>>) -> Result<Self, ForecastError> {
        let len = profiles.first().map(Vec::len).ok_or(ForecastError::EmptyDictionary)?;
        if len == 0 || profiles.iter().any(|p| p.len() != len) {
            return Err(ForecastError::DictionaryShape);
        }
        if profiles.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ForecastError::DictionaryRange);
        }
        Ok(Self { profiles })
    }

    /// `count` bells scaled by `k / count`, `k = 1..=count`, sampled at the
    /// start of every step.
    pub fn bells(steps_per_day: usize, count: usize) -> Self {
        let profiles = (1..=count)
            .map(|k| {
                let peak = k as f64 / count as f64;
                (0..steps_per_day)
                    .map(|n| peak * bell_shape(24.0 * n as f64 / steps_per_day as f64))
                    .collect()
            })
            .collect();
        Self { profiles }
    }

    pub fn steps_per_day(&self) -> usize {
        self.profiles[0].len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.profiles {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Averages the KRR value with the next-step value of the dictionary profile
/// closest to `previous` at step `n`; ties go to the lower index.
pub fn solar_forecast_step(krr_value: f64, dict: &ProfileDictionary, previous: f64, n: usize) -> f64 {
    let spd = dict.steps_per_day();
    let n = n % spd;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in dict.profiles.iter().enumerate() {
        let d = (previous - p[n]).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    let anchor = dict.profiles[best][(n + 1) % spd];
    (0.5 * (krr_value + anchor)).max(0.0)
}

/// Which value selects the anchor profile during a multi-step rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorReference {
    /// The previous value of the rollout itself.
    #[default]
    RolloutValue,
    /// The last measured value, for every step of the rollout.
    LastMeasurement,
}

/// Anchored auto-regressive rollout. `window` ends with the value at absolute
/// step `step`; the result holds steps `step + 1 ..= step + n`.
pub fn solar_rollout(
    model: &KrrModel,
    dict: &ProfileDictionary,
    window: &[f64],
    step: usize,
    n: usize,
    reference: AnchorReference,
) -> Result<Vec<f64>, ForecastError> {
    let spd = dict.steps_per_day();
    let measured = *window.last().ok_or(ForecastError::WindowLength {
        expected: model.lag,
        found: 0,
    })?;
    let mut w = window.to_vec();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let s = step + k;
        let last = *w.last().expect("window is non-empty");
        let krr = last + model.predict_increment(&w, time_of_day(s, spd))?;
        let prev = match reference {
            AnchorReference::RolloutValue => last,
            AnchorReference::LastMeasurement => measured,
        };
        let v = solar_forecast_step(krr, dict, prev, s).min(1.0);
        out.push(v);
        w.remove(0);
        w.push(v);
    }
    Ok(out)
}
