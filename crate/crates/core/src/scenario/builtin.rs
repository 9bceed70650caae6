//! Built-in feeders with their device placements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::profiles::{sub_seed, Weather};
use super::{
    BatteryConfig, DieselConfig, LoadConfig, NetworkConfig, ProfileSource, PvConfig, ScenarioConfig, ScenarioError,
};
use crate::forecast::{DemandResponseParams, LoadType};
use crate::netmodel::BranchRow;

pub const BUILTIN_NAMES: [&str; 4] = ["10bus", "18bus", "33bus", "18bus-stress"];

fn rows(table: &[(usize, usize, &str, f64)]) -> Vec<BranchRow> {
    table.iter().map(|&(f, t, w, l)| BranchRow::new(f, t, w, l)).collect()
}

pub fn branches_10bus() -> Vec<BranchRow> {
    rows(&[
        (1, 3, "AWG2/0x2", 80.0),
        (3, 6, "AWG8", 80.0),
        (3, 10, "AWG4/0", 80.0),
        (10, 2, "AWG10", 80.0),
        (3, 4, "AWG1/0x2", 80.0),
        (4, 5, "AWG6", 80.0),
        (4, 7, "AWG2/0", 80.0),
        (7, 9, "AWG10", 80.0),
        (7, 8, "AWG6", 80.0),
    ])
}

pub fn branches_18bus() -> Vec<BranchRow> {
    rows(&[
        (1, 2, "AWG750", 80.0),
        (2, 3, "AWG750", 80.0),
        (3, 4, "AWG600", 80.0),
        (4, 5, "AWG350", 80.0),
        (5, 6, "AWG350", 80.0),
        (6, 7, "AWG1/0", 120.0),
        (7, 8, "AWG1/0", 120.0),
        (8, 9, "AWG1/0", 120.0),
        (9, 10, "AWG1/0", 80.0),
        (3, 11, "AWG6", 30.0),
        (4, 12, "AWG1/0", 30.0),
        (12, 13, "AWG1/0", 30.0),
        (13, 14, "AWG1/0", 30.0),
        (14, 15, "AWG250", 30.0),
        (6, 16, "AWG250", 30.0),
        (9, 17, "AWG2/0", 30.0),
        (10, 18, "AWG1/0", 30.0),
    ])
}

pub fn branches_33bus() -> Vec<BranchRow> {
    rows(&[
        (1, 2, "AWG600x3", 80.0),
        (2, 3, "AWG350x3", 80.0),
        (3, 4, "AWG250x3", 80.0),
        (4, 5, "AWG250x3", 80.0),
        (5, 6, "AWG250x3", 80.0),
        (6, 7, "AWG2/0x2", 80.0),
        (7, 8, "AWG2/0x2", 80.0),
        (8, 9, "AWG2/0x2", 80.0),
        (9, 10, "AWG2/0x2", 80.0),
        (10, 11, "AWG1/0x2", 30.0),
        (11, 12, "AWG2x2", 30.0),
        (12, 13, "AWG2x2", 30.0),
        (13, 14, "AWG4x2", 30.0),
        (14, 15, "AWG2", 30.0),
        (15, 16, "AWG3", 30.0),
        (16, 17, "AWG3", 30.0),
        (17, 18, "AWG3", 30.0),
        (2, 19, "AWG1/0x2", 30.0),
        (19, 20, "AWG1/0x2", 30.0),
        (20, 21, "AWG1/0x2", 30.0),
        (21, 22, "AWG1/0x2", 30.0),
        (3, 23, "AWG1/0x2", 30.0),
        (23, 24, "AWG1/0x2", 30.0),
        (24, 25, "AWG1/0x2", 30.0),
        (6, 26, "AWG1/0x2", 30.0),
        (26, 27, "AWG1/0x2", 30.0),
        (27, 28, "AWG1/0x2", 30.0),
        (28, 29, "AWG1/0x2", 30.0),
        (29, 30, "AWG1/0x2", 30.0),
        (30, 31, "AWG2/0x2", 30.0),
        (31, 32, "AWG2/0x2", 30.0),
        (32, 33, "AWG2/0x2", 30.0),
    ])
}

/// `10 + 20X` kW with `X ~ U(0, 1)` per bus, drawn from the scenario seed.
fn residential_ratings(seed: u64, buses: &[usize]) -> Vec<LoadConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 100, 0));
    buses
        .iter()
        .map(|&bus| LoadConfig::new(bus, LoadType::Residential, 10.0 + 20.0 * rng.random::<f64>()))
        .collect()
}

fn battery(bus: usize, p_rated_mw: f64) -> BatteryConfig {
    BatteryConfig {
        bus,
        p_rated_mw,
        ..Default::default()
    }
}

fn with_k_adj(k_adj: f64) -> DemandResponseParams {
    DemandResponseParams {
        k_adj,
        ..Default::default()
    }
}

pub fn builtin_config(name: &str, seed: u64) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig {
        name: name.to_string(),
        rng_seed: seed,
        ..Default::default()
    };
    match name {
        "10bus" => {
            cfg.network = NetworkConfig::builtin(name);
            cfg.batteries = vec![battery(3, 0.15), battery(4, 0.15)];
            cfg.pv = vec![PvConfig {
                bus: 4,
                rated_kw: 250.0,
            }];
            cfg.loads = vec![
                LoadConfig::new(2, LoadType::Residential, 12.75),
                LoadConfig::new(6, LoadType::Residential, 30.0),
                LoadConfig::new(8, LoadType::Residential, 40.0),
                LoadConfig::new(9, LoadType::Residential, 12.75),
                LoadConfig::new(5, LoadType::Business, 42.5),
                LoadConfig::new(7, LoadType::Business, 61.2),
            ];
            cfg.demand_response = with_k_adj(0.003);
        }
        "18bus" | "18bus-stress" => {
            cfg.network = NetworkConfig::builtin("18bus");
            cfg.batteries = vec![battery(10, 0.15), battery(15, 0.15), battery(16, 0.15)];
            cfg.pv = vec![
                PvConfig {
                    bus: 15,
                    rated_kw: 200.0,
                },
                PvConfig {
                    bus: 16,
                    rated_kw: 300.0,
                },
            ];
            cfg.diesel = vec![DieselConfig::new(10, 20.0)];
            let res: Vec<usize> = (2..=18).collect();
            cfg.loads = residential_ratings(seed, &res);
            cfg.loads.push(LoadConfig::new(2, LoadType::Business, 60.0));
            cfg.loads.push(LoadConfig::new(17, LoadType::Business, 100.0));
            cfg.demand_response = with_k_adj(0.002);
            if name == "18bus-stress" {
                // Headroom against forecast error so committed plans stay secure.
                cfg.limits.current_margin = 0.1;
                cfg.limits.voltage_margin = 0.01;
                cfg.profiles = ProfileSource::Synthetic {
                    weather: Weather::Clear,
                    history_days: super::default_history_days(),
                };
            }
        }
        "33bus" => {
            cfg.network = NetworkConfig::builtin(name);
            cfg.batteries = vec![battery(10, 0.2), battery(22, 0.3), battery(25, 0.3), battery(30, 0.3)];
            cfg.pv = vec![PvConfig {
                bus: 6,
                rated_kw: 400.0,
            }];
            cfg.diesel = vec![DieselConfig::new(33, 40.0), DieselConfig::new(18, 80.0)];
            let res: Vec<usize> = (2..=33).collect();
            cfg.loads = residential_ratings(seed, &res);
            for (bus, kw) in [(18, 80.0), (22, 60.0), (25, 60.0), (33, 80.0)] {
                cfg.loads.push(LoadConfig::new(bus, LoadType::Business, kw));
            }
            cfg.demand_response = with_k_adj(0.001);
        }
        _ => return Err(ScenarioError::UnknownBuiltin(name.to_string())),
    }
    Ok(cfg)
}

pub fn builtin_branches(name: &str) -> Result<Vec<BranchRow>, ScenarioError> {
    match name {
        "10bus" => Ok(branches_10bus()),
        "18bus" => Ok(branches_18bus()),
        "33bus" => Ok(branches_33bus()),
        _ => Err(ScenarioError::UnknownBuiltin(name.to_string())),
    }
}
