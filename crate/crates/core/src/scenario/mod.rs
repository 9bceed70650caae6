//! Scenario configuration: network, devices, prices, horizon and profiles.
//!
//! A configuration is a JSON document. The key `"builtin"` names a built-in
//! case whose fully populated configuration is used as the base; every other
//! key is merged over it (objects recursively, everything else replaced).

mod builtin;
mod profiles;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use builtin::{branches_10bus, branches_18bus, branches_33bus, builtin_branches, builtin_config, BUILTIN_NAMES};
pub use profiles::{
    load_profiles, parse_profile_csv, synth_profile, synthetic_profile_set, FamilyHistory, ProfileSet, SynthKind,
    Weather,
};

use crate::assembler::{BatteryParams, NetworkLimits, TariffSchedule, DAY_HOURS, DEFAULT_DEGRADATION_COST};
use crate::forecast::{DemandResponseParams, ForecastConfig, LoadType};
use crate::netmodel::{load_network, Bases, BranchRow, NetworkError, NetworkModel, WireLibrary};

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("malformed document: {0}")]
    Syntax(String),
    #[error("at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unknown builtin case `{0}`")]
    UnknownBuiltin(String),
    #[error("{device} refers to bus {bus}, which does not exist")]
    UnknownBus { device: String, bus: usize },
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Built-in branch table used when `branches` is empty.
    pub builtin: Option<String>,
    pub branches: Vec<BranchRow>,
    pub bases: Bases,
}

impl NetworkConfig {
    pub fn builtin(name: &str) -> Self {
        Self {
            builtin: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn rows(&self) -> Result<Vec<BranchRow>, ScenarioError> {
        match (&self.builtin, self.branches.is_empty()) {
            (_, false) => Ok(self.branches.clone()),
            (Some(name), true) => builtin_branches(name),
            (None, true) => Err(ScenarioError::Invalid("network has no branches".into())),
        }
    }

    pub fn load(&self) -> Result<NetworkModel, ScenarioError> {
        Ok(load_network(&self.rows()?, &WireLibrary::builtin(), self.bases)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub bus: usize,
    pub p_rated_mw: f64,
    /// Energy capacity as hours at rated power.
    pub duration_h: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub c_deg: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            bus: 0,
            p_rated_mw: 0.0,
            duration_h: 5.0,
            eta_ch: 0.95,
            eta_dis: 0.95,
            sigma0: 0.3,
            sigma_min: 0.2,
            sigma_max: 0.9,
            c_deg: DEFAULT_DEGRADATION_COST,
        }
    }
}

impl BatteryConfig {
    pub fn to_params(&self) -> BatteryParams {
        BatteryParams {
            bus: self.bus,
            p_rated: self.p_rated_mw,
            e_max: self.p_rated_mw * self.duration_h,
            eta_ch: self.eta_ch,
            eta_dis: self.eta_dis,
            sigma0: self.sigma0,
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
            c_deg: self.c_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvConfig {
    pub bus: usize,
    pub rated_kw: f64,
}

/// Uncontrolled fixed-output generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DieselConfig {
    pub bus: usize,
    pub rated_kw: f64,
    /// Stored for reference; the active-power model does not use it.
    pub power_factor: f64,
}

impl DieselConfig {
    pub fn new(bus: usize, rated_kw: f64) -> Self {
        Self {
            bus,
            rated_kw,
            power_factor: 0.85,
        }
    }
}

impl Default for DieselConfig {
    fn default() -> Self {
        Self::new(0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    pub bus: usize,
    pub kind: LoadType,
    pub rated_kw: f64,
    /// Stored for reference; the active-power model does not use it.
    pub power_factor: f64,
}

impl LoadConfig {
    pub fn new(bus: usize, kind: LoadType, rated_kw: f64) -> Self {
        Self {
            bus,
            kind,
            rated_kw,
            power_factor: 0.9,
        }
    }
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self::new(0, LoadType::Residential, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    /// Prediction step, hours.
    pub dt_p_h: f64,
    /// Decision step, hours.
    pub dt_d_h: f64,
    /// Prediction steps per horizon.
    pub n_pre: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            dt_p_h: 1.0,
            dt_d_h: 1.0,
            n_pre: 24,
        }
    }
}

fn is_integer_ratio(a: f64, b: f64) -> bool {
    let r = a / b;
    r >= 1.0 - 1e-9 && (r - r.round()).abs() < 1e-9
}

impl HorizonConfig {
    /// Decision steps per day.
    pub fn k_d(&self) -> usize {
        (DAY_HOURS / self.dt_d_h).round() as usize
    }

    pub fn steps_per_day(&self) -> usize {
        (DAY_HOURS / self.dt_p_h).round() as usize
    }

    pub fn span_h(&self) -> f64 {
        self.n_pre as f64 * self.dt_p_h
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.dt_p_h > 0.0 && self.dt_d_h > 0.0) || self.n_pre == 0 {
            return Err(ScenarioError::Invalid("horizon steps must be positive".into()));
        }
        if !is_integer_ratio(self.dt_p_h, self.dt_d_h) || !is_integer_ratio(DAY_HOURS, self.dt_p_h) {
            return Err(ScenarioError::Invalid(format!(
                "decision step {} h must divide prediction step {} h, which must divide the day",
                self.dt_d_h, self.dt_p_h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSource {
    Synthetic {
        #[serde(default)]
        weather: Weather,
        #[serde(default = "default_history_days")]
        history_days: usize,
    },
    /// Family-level `step,value` files; the last day of each is realized.
    Csv {
        solar: PathBuf,
        residential: PathBuf,
        business: PathBuf,
    },
}

fn default_history_days() -> usize {
    14
}

impl Default for ProfileSource {
    fn default() -> Self {
        ProfileSource::Synthetic {
            weather: Weather::Cloudy,
            history_days: default_history_days(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub network: NetworkConfig,
    pub batteries: Vec<BatteryConfig>,
    pub pv: Vec<PvConfig>,
    pub diesel: Vec<DieselConfig>,
    pub loads: Vec<LoadConfig>,
    pub tariff: TariffSchedule,
    pub dr_enabled: bool,
    pub demand_response: DemandResponseParams,
    pub horizon: HorizonConfig,
    pub limits: NetworkLimits,
    pub rng_seed: u64,
    pub profiles: ProfileSource,
    pub forecast: ForecastConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            network: NetworkConfig::default(),
            batteries: Vec::new(),
            pv: Vec::new(),
            diesel: Vec::new(),
            loads: Vec::new(),
            tariff: TariffSchedule::default(),
            dr_enabled: true,
            demand_response: DemandResponseParams::default(),
            horizon: HorizonConfig::default(),
            limits: NetworkLimits::default(),
            rng_seed: DEFAULT_SEED,
            profiles: ProfileSource::default(),
            forecast: ForecastConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn battery_params(&self) -> Vec<BatteryParams> {
        self.batteries.iter().map(BatteryConfig::to_params).collect()
    }

    pub fn load_kinds(&self) -> Vec<SynthKind> {
        self.loads
            .iter()
            .map(|l| match l.kind {
                LoadType::Residential => SynthKind::Residential,
                LoadType::Business => SynthKind::Business,
            })
            .collect()
    }

    /// Checks internal consistency and that every device sits on an existing bus.
    pub fn validate(&self, network: &NetworkModel) -> Result<(), ScenarioError> {
        self.horizon.validate()?;
        self.tariff
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.demand_response
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let mut devices: Vec<(String, usize)> = Vec::new();
        devices.extend(
            self.batteries
                .iter()
                .enumerate()
                .map(|(i, b)| (format!("battery {}", i + 1), b.bus)),
        );
        devices.extend(
            self.pv
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("pv {}", i + 1), p.bus)),
        );
        devices.extend(
            self.diesel
                .iter()
                .enumerate()
                .map(|(i, d)| (format!("diesel {}", i + 1), d.bus)),
        );
        devices.extend(
            self.loads
                .iter()
                .enumerate()
                .map(|(i, l)| (format!("load {}", i + 1), l.bus)),
        );
        if let Some((device, bus)) = devices.into_iter().find(|(_, b)| !network.has_bus(*b)) {
            return Err(ScenarioError::UnknownBus { device, bus });
        }
        for b in self.battery_params() {
            b.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        let negative = self
            .pv
            .iter()
            .map(|p| p.rated_kw)
            .chain(self.diesel.iter().map(|d| d.rated_kw));
        if negative
            .chain(self.loads.iter().map(|l| l.rated_kw))
            .any(|kw| !(kw >= 0.0))
        {
            return Err(ScenarioError::Invalid("device ratings must be non-negative".into()));
        }
        let lim = &self.limits;
        if !(lim.v_min > 0.0 && lim.v_min < lim.v_max && lim.p_sys_max >= 0.0) {
            return Err(ScenarioError::Invalid("network limits".into()));
        }
        Ok(())
    }

    /// Network with device references attached to buses.
    pub fn network(&self) -> Result<NetworkModel, ScenarioError> {
        use crate::netmodel::DeviceRef;
        let net = self.network.load()?;
        let mut devices = Vec::new();
        devices.extend(
            self.batteries
                .iter()
                .enumerate()
                .map(|(i, b)| (b.bus, DeviceRef::Battery(i))),
        );
        devices.extend(self.pv.iter().enumerate().map(|(i, p)| (p.bus, DeviceRef::Pv(i))));
        devices.extend(
            self.diesel
                .iter()
                .enumerate()
                .map(|(i, d)| (d.bus, DeviceRef::Diesel(i))),
        );
        devices.extend(self.loads.iter().enumerate().map(|(i, l)| (l.bus, DeviceRef::Load(i))));
        Ok(net.with_devices(&devices))
    }

    /// Realized and historical profiles on the prediction grid.
    pub fn profiles(&self) -> Result<ProfileSet, ScenarioError> {
        let spd = self.horizon.steps_per_day();
        match &self.profiles {
            ProfileSource::Synthetic { weather, history_days } => {
                if *history_days < 2 {
                    return Err(ScenarioError::Invalid("at least two history days are needed".into()));
                }
                Ok(synthetic_profile_set(
                    self.rng_seed,
                    *weather,
                    *history_days,
                    self.pv.len(),
                    &self.load_kinds(),
                    spd,
                ))
            }
            ProfileSource::Csv {
                solar,
                residential,
                business,
            } => load_profiles(solar, residential, business, self.pv.len(), &self.load_kinds(), spd),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

/// Fully populated built-in case.
pub fn builtin_case(name: &str, seed: u64) -> Result<(NetworkModel, ScenarioConfig), ScenarioError> {
    let cfg = builtin_config(name, seed)?;
    let net = cfg.network()?;
    cfg.validate(&net)?;
    Ok((net, cfg))
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses and validates a configuration document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| ScenarioError::Syntax("top level must be an object".into()))?;
    let value = match obj.remove("builtin") {
        Some(Value::String(name)) => {
            let seed = match obj.get("rng_seed") {
                None => DEFAULT_SEED,
                Some(v) => v.as_u64().ok_or_else(|| ScenarioError::Schema {
                    path: "rng_seed".into(),
                    message: "expected an unsigned integer".into(),
                })?,
            };
            let mut base = serde_json::to_value(builtin_config(&name, seed)?).expect("configuration serializes");
            merge(&mut base, doc);
            base
        }
        Some(_) => {
            return Err(ScenarioError::Schema {
                path: "builtin".into(),
                message: "expected a case name".into(),
            })
        }
        None => doc,
    };
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| ScenarioError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let net = cfg.network()?;
    cfg.validate(&net)?;
    Ok(cfg)
}
