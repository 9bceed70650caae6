//! Solar and load forecasting plus the demand-response load model.

mod dr;
mod krr;
mod msms;
mod solar;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dr::{consumption_under_incentive, price_sensitivity, DemandResponseParams, LoadType, TariffPeriod};
pub use krr::{build_samples, fit_krr, gaussian_kernel, gram_matrix, time_of_day, KrrModel, Sample};
pub use msms::{msms_score, msms_tune, MsmsConfig, MsmsResult, RELATIVE_FLOOR};
pub use solar::{bell_shape, solar_forecast_step, solar_rollout, AnchorReference, ProfileDictionary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("no training samples")]
    NoSamples,
    #[error("kernel system is singular (duplicate inputs need a positive regularization)")]
    SingularGram,
    #[error("window length {found}, expected {expected}")]
    WindowLength { expected: usize, found: usize },
    #[error("invalid hyperparameters sigma = {sigma}, lambda = {lambda}")]
    BadHyperparameters { sigma: f64, lambda: f64 },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("{days} days of history are not enough for {folds} folds")]
    InsufficientData { days: usize, folds: usize },
    #[error("profile dictionary is empty")]
    EmptyDictionary,
    #[error("dictionary profiles must share one non-zero length")]
    DictionaryShape,
    #[error("dictionary values must lie in [0, 1]")]
    DictionaryRange,
    #[error("tariff must be positive")]
    ZeroTariff,
    #[error("elasticities must be ≤ 0, k_adj and the energy cap ≥ 0")]
    BadDemandResponse,
}

/// Forecasts over one horizon, all in per unit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForecastBundle {
    /// Per PV source, non-negative.
    pub solar: Vec<Vec<f64>>,
    /// Per load, as negative injections.
    pub base_load: Vec<Vec<f64>>,
    /// Per load, price sensitivity `α` (consumption per $/kWh, ≤ 0).
    pub alpha: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub lag: usize,
    pub dictionary_size: usize,
    /// Run the MSMS search; otherwise `sigma`/`lambda` are used directly.
    pub tune: bool,
    pub sigma: f64,
    pub lambda: f64,
    pub msms: MsmsConfig,
    pub anchor: AnchorReference,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            lag: 3,
            dictionary_size: 8,
            tune: true,
            sigma: 0.2,
            lambda: 1e-4,
            msms: MsmsConfig::default(),
            anchor: AnchorReference::default(),
        }
    }
}

/// Which profile family a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Solar,
    Residential,
    Business,
}

impl From<LoadType> for ProfileKind {
    fn from(t: LoadType) -> Self {
        match t {
            LoadType::Residential => ProfileKind::Residential,
            LoadType::Business => ProfileKind::Business,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedModel {
    pub model: KrrModel,
    pub tuning: MsmsResult,
}

/// One model per profile family, trained on normalized (0–1 of rating) daily
/// profiles so that devices of the same family share it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModels {
    pub solar: TunedModel,
    pub residential: TunedModel,
    pub business: TunedModel,
    pub dictionary: ProfileDictionary,
    pub steps_per_day: usize,
    pub config: ForecastConfig,
}

/// Tunes (when enabled) and fits one family model on normalized daily profiles.
pub fn fit_family(days: &[Vec<f64>], steps_per_day: usize, cfg: &ForecastConfig) -> Result<TunedModel, ForecastError> {
    let tuning = if cfg.tune {
        msms_tune(days, cfg.lag, steps_per_day, &cfg.msms)?
    } else {
        MsmsResult {
            sigma: cfg.sigma,
            lambda: cfg.lambda,
            score: f64::NAN,
        }
    };
    let samples = build_samples(days, cfg.lag, steps_per_day);
    let model = fit_krr(&samples, tuning.sigma, tuning.lambda)?;
    Ok(TunedModel { model, tuning })
}

impl ForecastModels {
    pub fn fit(
        solar_days: &[Vec<f64>],
        residential_days: &[Vec<f64>],
        business_days: &[Vec<f64>],
        steps_per_day: usize,
        config: &ForecastConfig,
    ) -> Result<Self, ForecastError> {
        Ok(Self {
            solar: fit_family(solar_days, steps_per_day, config)?,
            residential: fit_family(residential_days, steps_per_day, config)?,
            business: fit_family(business_days, steps_per_day, config)?,
            dictionary: ProfileDictionary::bells(steps_per_day, config.dictionary_size),
            steps_per_day,
            config: config.clone(),
        })
    }

    pub fn model(&self, kind: ProfileKind) -> &KrrModel {
        match kind {
            ProfileKind::Solar => &self.solar.model,
            ProfileKind::Residential => &self.residential.model,
            ProfileKind::Business => &self.business.model,
        }
    }

    /// Normalized forecast for steps `step + 1 ..= step + n`, where `window`
    /// holds the normalized values up to and including `step`. Values stay
    /// within the normalized range `[0, 1]`.
    pub fn rollout(&self, kind: ProfileKind, window: &[f64], step: usize, n: usize) -> Result<Vec<f64>, ForecastError> {
        match kind {
            ProfileKind::Solar => {
                solar_rollout(&self.solar.model, &self.dictionary, window, step, n, self.config.anchor)
            }
            _ => self
                .model(kind)
                .rollout_within(window, step, n, self.steps_per_day, (0.0, 1.0)),
        }
    }
}
