//! Closed-loop energy management: day-ahead and receding-horizon policies on
//! the single-bus or branch-flow model, applied to the power-flow plant.

mod report;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    dr_settlement, economic_cost, tightness_stats, write_trace_csv, CostReport, DrSettlement, SecurityStatus, Tightness,
};
pub use run::{
    apply_step, build_horizon_program, plan_horizon, run_day_ahead, run_mpc, run_simulation, Controls, HorizonProgram,
    Plan, PlantState, SimulationTrace, StepCost, StepRecord, Telemetry,
};

use crate::assembler::{AssemblyError, BatteryParams, FlowModel, Horizon, DAY_HOURS};
use crate::forecast::{ForecastError, ForecastModels, LoadType, ProfileKind};
use crate::netmodel::NetworkModel;
use crate::scenario::{ProfileSet, ScenarioConfig, ScenarioError};
use crate::socp::{ProgramError, SolverOptions};

#[derive(Debug, Error)]
pub enum EmsError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("forecast: {0}")]
    Forecast(#[from] ForecastError),
    #[error("assembly: {0}")]
    Assembly(#[from] AssemblyError),
    #[error("solver: {0}")]
    Program(#[from] ProgramError),
    #[error("unknown mode `{0}` (expected lp-day-ahead, lp-mpc, socp-day-ahead, socp-mpc or all)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    DayAhead,
    Mpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmsMode {
    pub flow: FlowModel,
    pub policy: Policy,
}

impl EmsMode {
    pub const LP_DAY_AHEAD: EmsMode = EmsMode::new(FlowModel::Lp, Policy::DayAhead);
    pub const LP_MPC: EmsMode = EmsMode::new(FlowModel::Lp, Policy::Mpc);
    pub const SOCP_DAY_AHEAD: EmsMode = EmsMode::new(FlowModel::Socp, Policy::DayAhead);
    pub const SOCP_MPC: EmsMode = EmsMode::new(FlowModel::Socp, Policy::Mpc);
    pub const ALL: [EmsMode; 4] = [Self::LP_DAY_AHEAD, Self::LP_MPC, Self::SOCP_DAY_AHEAD, Self::SOCP_MPC];

    pub const fn new(flow: FlowModel, policy: Policy) -> Self {
        Self { flow, policy }
    }

    /// Parses a comma-separated list; `all` expands to the four modes.
    pub fn parse_list(text: &str) -> Result<Vec<EmsMode>, EmsError> {
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let modes = if part == "all" {
                Self::ALL.to_vec()
            } else {
                vec![part.parse()?]
            };
            for m in modes {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        if out.is_empty() {
            return Err(EmsError::UnknownMode(text.to_string()));
        }
        Ok(out)
    }
}

impl fmt::Display for EmsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flow = match self.flow {
            FlowModel::Lp => "lp",
            FlowModel::Socp => "socp",
        };
        let policy = match self.policy {
            Policy::DayAhead => "day-ahead",
            Policy::Mpc => "mpc",
        };
        write!(f, "{flow}-{policy}")
    }
}

impl FromStr for EmsMode {
    type Err = EmsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| EmsError::UnknownMode(s.to_string()))
    }
}

/// Where horizon forecasts come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecastSource {
    /// Trained forecasters seeded with measurements.
    #[default]
    Models,
    /// The realized profiles themselves.
    Perfect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmsOptions {
    pub solver: SolverOptions,
    pub forecasts: ForecastSource,
    /// Overrides the scenario's demand-response switch.
    pub dr_enabled: Option<bool>,
}

impl Default for EmsOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            forecasts: ForecastSource::Models,
            dr_enabled: None,
        }
    }
}

/// Per-device forecasts over a horizon, per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonForecast {
    /// `[pv][n]` generation.
    pub solar: Vec<Vec<f64>>,
    /// `[load][n]` base consumption (≥ 0).
    pub load: Vec<Vec<f64>>,
}

/// A scenario prepared for simulation: network, trained forecasters and
/// the realized day.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub network: NetworkModel,
    pub batteries: Vec<BatteryParams>,
    pub profiles: ProfileSet,
    pub models: Option<ForecastModels>,
    /// Day-ahead (start-of-day) normalized forecast on the prediction grid,
    /// `spd + 1` points per device.
    day_ahead_pv: Vec<Vec<f64>>,
    day_ahead_load: Vec<Vec<f64>>,
    /// Net shifted-energy cap, pu·h.
    pub epsilon: f64,
    pub forecasts: ForecastSource,
    pub dr_enabled: bool,
}

const TIME_EPS: f64 = 1e-9;

fn interp(grid: &[f64], x: f64) -> f64 {
    let i = (x + TIME_EPS).floor().max(0.0) as usize;
    if i + 1 >= grid.len() {
        return grid[grid.len() - 1];
    }
    let frac = (x - i as f64).clamp(0.0, 1.0);
    if frac < TIME_EPS {
        grid[i]
    } else {
        grid[i] * (1.0 - frac) + grid[i + 1] * frac
    }
}

impl Simulation {
    pub fn new(config: ScenarioConfig, options: &EmsOptions) -> Result<Self, EmsError> {
        let network = config.network()?;
        config.validate(&network)?;
        let profiles = config.profiles()?;
        let spd = profiles.steps_per_day;
        let models = match options.forecasts {
            ForecastSource::Models => Some(ForecastModels::fit(
                &profiles.history.solar,
                &profiles.history.residential,
                &profiles.history.business,
                spd,
                &config.forecast,
            )?),
            ForecastSource::Perfect => None,
        };
        let mut sim = Self {
            batteries: config.battery_params(),
            dr_enabled: options.dr_enabled.unwrap_or(config.dr_enabled),
            forecasts: options.forecasts,
            config,
            network,
            profiles,
            models,
            day_ahead_pv: Vec::new(),
            day_ahead_load: Vec::new(),
            epsilon: 0.0,
        };
        sim.day_ahead_pv = (0..sim.config.pv.len())
            .map(|i| sim.grid_forecast(ProfileKind::Solar, &sim.profiles.pv[i], 0))
            .collect::<Result<_, _>>()?;
        sim.day_ahead_load = (0..sim.config.loads.len())
            .map(|j| sim.grid_forecast(sim.config.loads[j].kind.into(), &sim.profiles.loads[j], 0))
            .collect::<Result<_, _>>()?;
        let energy: f64 = (0..sim.config.loads.len())
            .map(|j| sim.day_ahead_load[j][..spd].iter().sum::<f64>() * sim.load_scale(j) * sim.dt_p())
            .sum();
        sim.epsilon = sim.config.demand_response.energy_cap_fraction * energy;
        Ok(sim)
    }

    pub fn dt_p(&self) -> f64 {
        self.config.horizon.dt_p_h
    }

    pub fn dt_d(&self) -> f64 {
        self.config.horizon.dt_d_h
    }

    pub fn k_d(&self) -> usize {
        self.config.horizon.k_d()
    }

    pub fn s_base(&self) -> f64 {
        self.network.bases.s_base_mva
    }

    fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / self.network.bases.s_base_kw()
    }

    pub fn pv_scale(&self, i: usize) -> f64 {
        self.kw_to_pu(self.config.pv[i].rated_kw)
    }

    pub fn load_scale(&self, j: usize) -> f64 {
        self.kw_to_pu(self.config.loads[j].rated_kw)
    }

    pub fn load_types(&self) -> Vec<LoadType> {
        self.config.loads.iter().map(|l| l.kind).collect()
    }

    /// DR load types carrying incentive columns.
    pub fn dr_types(&self) -> &'static [LoadType] {
        if self.dr_enabled {
            &LoadType::ALL
        } else {
            &[]
        }
    }

    fn history_tail(&self, kind: ProfileKind) -> &[f64] {
        let h = &self.profiles.history;
        let days = match kind {
            ProfileKind::Solar => &h.solar,
            ProfileKind::Residential => &h.residential,
            ProfileKind::Business => &h.business,
        };
        days.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Normalized forecast on the prediction grid from index `h`: entry 0 is
    /// the measurement at `h`, the rest come from the forecaster, covering
    /// one day plus one step.
    fn grid_forecast(&self, kind: ProfileKind, realized: &[f64], h: usize) -> Result<Vec<f64>, EmsError> {
        let spd = self.profiles.steps_per_day;
        let Some(models) = &self.models else {
            return Ok((0..=spd + 1).map(|i| realized[(h + i) % spd]).collect());
        };
        let lag = self.config.forecast.lag;
        let tail = self.history_tail(kind);
        let window: Vec<f64> = (0..lag)
            .map(|i| {
                let idx = h as isize + 1 - lag as isize + i as isize;
                if idx >= 0 {
                    realized[idx as usize]
                } else {
                    let t = tail.len() as isize + idx;
                    if t >= 0 {
                        tail[t as usize]
                    } else {
                        realized[0]
                    }
                }
            })
            .collect();
        let mut out = vec![realized[h]];
        out.extend(models.rollout(kind, &window, h, spd + 1)?);
        Ok(out)
    }

    /// Realized normalized value of a device profile at `time` hours.
    fn realized_at(&self, profile: &[f64], time: f64) -> f64 {
        let spd = self.profiles.steps_per_day;
        let x = time.rem_euclid(DAY_HOURS) / self.dt_p();
        let i = (x + TIME_EPS).floor() as usize % spd;
        let frac = (x - i as f64).clamp(0.0, 1.0);
        if frac < TIME_EPS {
            profile[i]
        } else {
            profile[i] * (1.0 - frac) + profile[(i + 1) % spd] * frac
        }
    }

    pub fn realized_solar(&self, i: usize, time: f64) -> f64 {
        self.realized_at(&self.profiles.pv[i], time) * self.pv_scale(i)
    }

    pub fn realized_load(&self, j: usize, time: f64) -> f64 {
        self.realized_at(&self.profiles.loads[j], time) * self.load_scale(j)
    }

    /// Forecasts for the steps of `horizon` made at time `t`. The first step
    /// uses the measurement at `t`; steps past midnight reuse the start-of-day
    /// forecast of the same clock time.
    pub fn forecast(&self, t: f64, horizon: &Horizon) -> Result<HorizonForecast, EmsError> {
        let dt_p = self.dt_p();
        let spd = self.profiles.steps_per_day;
        let h = ((t + TIME_EPS) / dt_p).floor() as usize;
        let h = h.min(spd - 1);
        let series = |kind: ProfileKind, realized: &[f64], da: &[f64], scale: f64| -> Result<Vec<f64>, EmsError> {
            let grid = if h == 0 {
                da.to_vec()
            } else {
                self.grid_forecast(kind, realized, h)?
            };
            Ok(horizon
                .start
                .iter()
                .enumerate()
                .map(|(n, &s)| {
                    let v = if n == 0 || self.forecasts == ForecastSource::Perfect {
                        self.realized_at(realized, s)
                    } else if s >= DAY_HOURS - TIME_EPS {
                        interp(da, (s - DAY_HOURS) / dt_p)
                    } else {
                        interp(&grid, (s - h as f64 * dt_p) / dt_p)
                    };
                    v.max(0.0) * scale
                })
                .collect())
        };
        let solar = (0..self.config.pv.len())
            .map(|i| {
                series(
                    ProfileKind::Solar,
                    &self.profiles.pv[i],
                    &self.day_ahead_pv[i],
                    self.pv_scale(i),
                )
            })
            .collect::<Result<_, _>>()?;
        let load = (0..self.config.loads.len())
            .map(|j| {
                let kind = self.config.loads[j].kind.into();
                series(
                    kind,
                    &self.profiles.loads[j],
                    &self.day_ahead_load[j],
                    self.load_scale(j),
                )
            })
            .collect::<Result<_, _>>()?;
        Ok(HorizonForecast { solar, load })
    }

    /// Symmetric bound on branch powers: twice the total supply capacity.
    pub fn p_branch_max(&self) -> f64 {
        let gen_kw: f64 = self.config.pv.iter().map(|p| p.rated_kw).sum::<f64>()
            + self.config.diesel.iter().map(|d| d.rated_kw).sum::<f64>();
        let batt: f64 = self.batteries.iter().map(|b| b.p_max_pu(self.s_base())).sum();
        2.0 * (self.kw_to_pu(gen_kw) + batt + self.config.limits.p_sys_max)
    }

    pub fn diesel_injection(&self) -> Vec<f64> {
        let mut inj = vec![0.0; self.network.n_bus()];
        for d in &self.config.diesel {
            inj[d.bus - 1] += self.kw_to_pu(d.rated_kw);
        }
        inj
    }
}
