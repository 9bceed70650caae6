//! Price-responsive load model.
//!
//! Consumption reacts linearly to an incentive `ΔC` (a change of the buying
//! price, $/kWh): at step `k` the consumption is `ĉ_k + Σ_{i ≤ k} α_i ΔC_i`
//! with `α = ε_ela · ĉ / C_buy ≤ 0`. A positive incentive therefore lowers
//! consumption; as an injection the load moves toward zero by `−Σ α ΔC`.

use serde::{Deserialize, Serialize};

use super::ForecastError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadType {
    Residential,
    Business,
}

impl LoadType {
    pub const ALL: [LoadType; 2] = [LoadType::Residential, LoadType::Business];

    pub fn index(self) -> usize {
        match self {
            LoadType::Residential => 0,
            LoadType::Business => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TariffPeriod {
    Valley,
    OffPeak,
    Peak,
}

impl TariffPeriod {
    pub fn index(self) -> usize {
        match self {
            TariffPeriod::Valley => 0,
            TariffPeriod::OffPeak => 1,
            TariffPeriod::Peak => 2,
        }
    }
}

/// Elasticities are indexed `[load type][period]` with periods ordered
/// valley, off-peak, peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandResponseParams {
    pub elasticity: [[f64; 3]; 2],
    /// Incentive bound per step, as a fraction of the buying price.
    pub k_adj: f64,
    /// Cap on the net daily energy shift as a fraction of the forecast
    /// daily load energy.
    pub energy_cap_fraction: f64,
}

impl DemandResponseParams {
    pub fn elasticity(&self, load: LoadType, period: TariffPeriod) -> f64 {
        self.elasticity[load.index()][period.index()]
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.elasticity.iter().flatten().any(|e| !(*e <= 0.0))
            || !(self.k_adj >= 0.0)
            || !(self.energy_cap_fraction >= 0.0)
        {
            return Err(ForecastError::BadDemandResponse);
        }
        Ok(())
    }
}

impl Default for DemandResponseParams {
    fn default() -> Self {
        Self {
            elasticity: [[-0.10, -0.20, -0.35], [-0.15, -0.30, -0.50]],
            k_adj: 0.002,
            energy_cap_fraction: 1e-3,
        }
    }
}

/// `α = ε_ela · consumption / tariff`, where `base_load` is the (negative)
/// load injection. The result is in consumption units per $/kWh and is ≤ 0
/// for a non-positive elasticity.
pub fn price_sensitivity(elasticity: f64, base_load: f64, tariff: f64) -> Result<f64, ForecastError> {
    if !(tariff > 0.0) {
        return Err(ForecastError::ZeroTariff);
    }
    Ok(elasticity * (-base_load) / tariff)
}

/// Consumption trajectory under incentives: `ĉ_k + Σ_{i ≤ k} α_i ΔC_i`.
pub fn consumption_under_incentive(base_consumption: &[f64], alpha: &[f64], incentive: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    base_consumption
        .iter()
        .enumerate()
        .map(|(k, c)| {
            acc += alpha[k] * incentive[k];
            c + acc
        })
        .collect()
}
