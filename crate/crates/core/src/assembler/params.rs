use serde::{Deserialize, Serialize};

use super::AssemblyError;
use crate::forecast::{LoadType, TariffPeriod};

pub const DAY_HOURS: f64 = 24.0;
const TIME_EPS: f64 = 1e-9;

/// Prices of one tariff period, $/kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodPrices {
    pub buy_res: f64,
    pub buy_bus: f64,
    pub sell: f64,
    pub dg: f64,
}

impl PeriodPrices {
    pub fn buy(&self, load: LoadType) -> f64 {
        match load {
            LoadType::Residential => self.buy_res,
            LoadType::Business => self.buy_bus,
        }
    }
}

/// Time-of-use prices with an hour-of-day period map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TariffSchedule {
    pub valley: PeriodPrices,
    pub off_peak: PeriodPrices,
    pub peak: PeriodPrices,
    /// Period of each clock hour `0..24`.
    pub hours: Vec<TariffPeriod>,
    /// Which load tariff the microgrid pays for main-grid imports.
    pub grid_buy: LoadType,
}

impl Default for TariffSchedule {
    fn default() -> Self {
        let hours = (0..24)
            .map(|h| match h {
                0..8 => TariffPeriod::Valley,
                16..21 => TariffPeriod::Peak,
                _ => TariffPeriod::OffPeak,
            })
            .collect();
        Self {
            valley: PeriodPrices {
                buy_res: 0.12,
                buy_bus: 0.06,
                sell: 0.02,
                dg: 0.30,
            },
            off_peak: PeriodPrices {
                buy_res: 0.20,
                buy_bus: 0.12,
                sell: 0.05,
                dg: 0.30,
            },
            peak: PeriodPrices {
                buy_res: 0.35,
                buy_bus: 0.25,
                sell: 0.10,
                dg: 0.30,
            },
            hours,
            grid_buy: LoadType::Residential,
        }
    }
}

impl TariffSchedule {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        if self.hours.len() != 24 {
            return Err(AssemblyError::Tariff(format!(
                "period map has {} hours, expected 24",
                self.hours.len()
            )));
        }
        for p in [self.valley, self.off_peak, self.peak] {
            if [p.buy_res, p.buy_bus, p.sell, p.dg].iter().any(|x| !(*x >= 0.0)) {
                return Err(AssemblyError::Tariff("prices must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Period in force at `hour` (any real hour; wrapped to the clock day).
    pub fn period_at(&self, hour: f64) -> TariffPeriod {
        let h = (hour + TIME_EPS).rem_euclid(DAY_HOURS).floor() as usize;
        self.hours[h.min(23)]
    }

    pub fn prices(&self, period: TariffPeriod) -> PeriodPrices {
        match period {
            TariffPeriod::Valley => self.valley,
            TariffPeriod::OffPeak => self.off_peak,
            TariffPeriod::Peak => self.peak,
        }
    }

    pub fn at(&self, hour: f64) -> StepPrices {
        let period = self.period_at(hour);
        let p = self.prices(period);
        StepPrices {
            period,
            buy: p.buy(self.grid_buy),
            buy_res: p.buy_res,
            buy_bus: p.buy_bus,
            sell: p.sell,
            dg: p.dg,
        }
    }
}

/// Prices applying to one horizon step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPrices {
    pub period: TariffPeriod,
    /// Main-grid purchase price.
    pub buy: f64,
    pub buy_res: f64,
    pub buy_bus: f64,
    pub sell: f64,
    pub dg: f64,
}

impl StepPrices {
    pub fn buy_for(&self, load: LoadType) -> f64 {
        match load {
            LoadType::Residential => self.buy_res,
            LoadType::Business => self.buy_bus,
        }
    }
}

/// `0.5 · C_unit / N_cyc` with 300 $/kWh and 5000 cycles.
pub const DEFAULT_DEGRADATION_COST: f64 = 0.5 * 300.0 / 5000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub bus: usize,
    /// Rated power, MW.
    pub p_rated: f64,
    /// Energy capacity, MWh.
    pub e_max: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Degradation cost, $/kWh throughput.
    pub c_deg: f64,
}

impl BatteryParams {
    /// Battery with the default efficiency, SoC window and a 5 h duration.
    pub fn with_rating(bus: usize, p_rated: f64) -> Self {
        Self {
            bus,
            p_rated,
            e_max: 5.0 * p_rated,
            eta_ch: 0.95,
            eta_dis: 0.95,
            sigma0: 0.3,
            sigma_min: 0.2,
            sigma_max: 0.9,
            c_deg: DEFAULT_DEGRADATION_COST,
        }
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        let ok = 0.0 <= self.sigma_min
            && self.sigma_min < self.sigma0
            && self.sigma0 < self.sigma_max
            && self.sigma_max <= 1.0
            && self.eta_ch > 0.0
            && self.eta_ch <= 1.0
            && self.eta_dis > 0.0
            && self.eta_dis <= 1.0
            && self.p_rated >= 0.0
            && self.e_max > 0.0
            && self.c_deg >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(AssemblyError::Battery(self.bus))
        }
    }

    pub fn p_max_pu(&self, s_base_mva: f64) -> f64 {
        self.p_rated / s_base_mva
    }

    pub fn e_max_pu(&self, s_base_mva: f64) -> f64 {
        self.e_max / s_base_mva
    }

    /// SoC after one step of `dt` hours with powers in per unit.
    pub fn next_soc(&self, soc: f64, p_dis: f64, p_ch: f64, dt: f64, s_base_mva: f64) -> f64 {
        let e = self.e_max_pu(s_base_mva);
        soc + (p_ch * self.eta_ch / e - p_dis / (e * self.eta_dis)) * dt
    }
}

/// Step grid of one prediction horizon. Times are hours from the start of
/// the scheduling day and may run past midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub start: Vec<f64>,
    pub dt: Vec<f64>,
}

impl Horizon {
    pub fn uniform(t0: f64, dt: f64, n: usize) -> Self {
        Self {
            start: (0..n).map(|i| t0 + i as f64 * dt).collect(),
            dt: vec![dt; n],
        }
    }

    /// A decision step of `dt_d` hours followed by steps on the `dt_p` grid
    /// until `span` hours are covered. With `dt_d = dt_p` and aligned `t0`
    /// this is the uniform grid.
    pub fn hybrid(t0: f64, dt_d: f64, dt_p: f64, span: f64) -> Self {
        let end = t0 + span;
        let mut start = vec![t0];
        let mut dt = Vec::new();
        let mut t = t0 + dt_d;
        dt.push(dt_d);
        // Snap to the next prediction boundary, then walk the grid.
        let mut next = ((t / dt_p) - TIME_EPS).ceil() * dt_p;
        if next < t - TIME_EPS {
            next = t;
        }
        while t < end - TIME_EPS {
            let stop = if next > t + TIME_EPS { next } else { t + dt_p };
            let stop = stop.min(end);
            start.push(t);
            dt.push(stop - t);
            t = stop;
            next = t + dt_p;
        }
        Self { start, dt }
    }

    pub fn len(&self) -> usize {
        self.dt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt.is_empty()
    }

    pub fn end(&self, n: usize) -> f64 {
        self.start[n] + self.dt[n]
    }

    /// Number of leading steps that start before the end of the day.
    pub fn in_day(&self) -> usize {
        self.start.iter().take_while(|&&s| s < DAY_HOURS - TIME_EPS).count()
    }

    /// Step whose end coincides with the end of the day, if inside the horizon.
    pub fn terminal(&self) -> Option<usize> {
        (0..self.len()).find(|&n| (self.end(n) - DAY_HOURS).abs() < 1e-6)
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        if self.start.len() != self.dt.len() || self.is_empty() || self.dt.iter().any(|d| !(*d > 0.0)) {
            return Err(AssemblyError::Horizon);
        }
        Ok(())
    }
}
