//! One scenario, several EMS modes.

use std::path::PathBuf;

use log::info;
use serde::{Deserialize, Serialize};

use super::{parallel_map, ExperimentError};
use crate::ems::{run_simulation, write_trace_csv, CostReport, EmsMode, EmsOptions, Simulation, SimulationTrace};
use crate::forecast::ProfileKind;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub config: ScenarioConfig,
    pub modes: Vec<EmsMode>,
    /// Trace CSVs are written here when set.
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub options: EmsOptions,
}

impl RunRequest {
    pub fn new(config: ScenarioConfig, modes: Vec<EmsMode>) -> Self {
        Self {
            config,
            modes,
            out: None,
            jobs: 1,
            options: EmsOptions::default(),
        }
    }
}

/// Hyperparameters selected for one forecaster family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyTuning {
    pub family: ProfileKind,
    pub sigma: f64,
    pub lambda: f64,
    /// MSMS objective at the selection; absent when tuning is off.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: String,
    pub report: CostReport,
    /// Trace CSV files written for this mode.
    pub traces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub results: Vec<ModeResult>,
    /// Steps across all modes whose solve did not reach optimality.
    pub solver_failures: usize,
    /// Net shifted-energy cap, pu·h.
    pub energy_cap_pu_h: f64,
    pub forecast_tuning: Vec<FamilyTuning>,
    /// The scenario with every default resolved.
    pub config: ScenarioConfig,
}

fn tuning(sim: &Simulation) -> Vec<FamilyTuning> {
    let Some(models) = &sim.models else {
        return Vec::new();
    };
    [
        (ProfileKind::Solar, &models.solar),
        (ProfileKind::Residential, &models.residential),
        (ProfileKind::Business, &models.business),
    ]
    .into_iter()
    .map(|(family, m)| FamilyTuning {
        family,
        sigma: m.tuning.sigma,
        lambda: m.tuning.lambda,
        score: m.tuning.score.is_finite().then_some(m.tuning.score),
    })
    .collect()
}

/// Runs every requested mode on one scenario. Modes run concurrently up to
/// `jobs`; traces come back in request order.
pub fn run_scenario(req: &RunRequest) -> Result<(RunReport, Vec<SimulationTrace>), ExperimentError> {
    if req.modes.is_empty() {
        return Err(ExperimentError::Invalid("no modes requested".into()));
    }
    let sim = Simulation::new(req.config.clone(), &req.options)?;
    let traces = parallel_map(&req.modes, req.jobs, |&mode| {
        info!("{}: running {mode}", req.config.name);
        run_simulation(&sim, mode, &req.options)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let diesel_kw: f64 = req.config.diesel.iter().map(|d| d.rated_kw).sum();
    let mut results = Vec::with_capacity(traces.len());
    for trace in &traces {
        let files = match &req.out {
            Some(dir) => write_trace_csv(trace, dir)?
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            None => Vec::new(),
        };
        results.push(ModeResult {
            mode: trace.mode.to_string(),
            report: CostReport::from_trace(trace, &req.config.tariff, diesel_kw, sim.dr_enabled),
            traces: files,
        });
    }
    let solver_failures = results.iter().map(|r| r.report.fallback_steps).sum();
    let report = RunReport {
        scenario: req.config.name.clone(),
        seed: req.config.rng_seed,
        results,
        solver_failures,
        energy_cap_pu_h: sim.epsilon,
        forecast_tuning: tuning(&sim),
        config: req.config.clone(),
    };
    Ok((report, traces))
}
