//! Solver scaling over feeder size and horizon length.

use log::info;
use serde::{Deserialize, Serialize};

use super::{loglog_slope, median, parallel_map, ExperimentError};
use crate::assembler::FlowModel;
use crate::ems::{run_mpc, EmsOptions, Simulation};
use crate::scenario::builtin_config;

#[derive(Debug, Clone)]
pub struct SweepRequest {
    pub cases: Vec<String>,
    pub horizons: Vec<usize>,
    pub seed: u64,
    pub jobs: usize,
    /// Run cells one at a time so wall-clock timings do not contend.
    pub timing_strict: bool,
    pub options: EmsOptions,
}

impl Default for SweepRequest {
    fn default() -> Self {
        Self {
            cases: ["10bus", "18bus", "33bus"].map(String::from).to_vec(),
            horizons: vec![6, 12, 24],
            seed: crate::scenario::DEFAULT_SEED,
            jobs: 1,
            timing_strict: false,
            options: EmsOptions::default(),
        }
    }
}

/// Telemetry of one day of SOCP-MPC on one case and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub case: String,
    pub n_pre: usize,
    pub n_br: usize,
    /// Decision variables of the first program.
    pub n_vars: usize,
    pub kkt_dim: usize,
    pub steps: usize,
    /// Median interior-point iterations over the decision steps.
    pub median_iterations: f64,
    /// Median over steps of solve time divided by iterations, seconds.
    pub median_iteration_time: f64,
    pub fallback_steps: usize,
}

impl SweepCell {
    pub fn size(&self) -> f64 {
        (self.n_pre * self.n_br) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub cells: Vec<SweepCell>,
    /// Log-log slope of median iterations against `N_pre·N_br`.
    pub iteration_slope: Option<f64>,
    /// Log-log slope of median time per iteration against `N_pre·N_br`.
    pub iteration_time_slope: Option<f64>,
    pub timing_strict: bool,
}

fn run_cell(case: &str, n_pre: usize, req: &SweepRequest) -> Result<SweepCell, ExperimentError> {
    let mut config = builtin_config(case, req.seed)?;
    config.horizon.n_pre = n_pre;
    let sim = Simulation::new(config, &req.options)?;
    info!("sweep: {case} with {n_pre} prediction steps");
    let trace = run_mpc(&sim, FlowModel::Socp, &req.options)?;
    let tele: Vec<_> = trace.records.iter().filter_map(|r| r.telemetry.as_ref()).collect();
    let iterations: Vec<f64> = tele.iter().map(|t| t.iterations as f64).collect();
    let per_iteration: Vec<f64> = tele
        .iter()
        .filter(|t| t.iterations > 0)
        .map(|t| t.solve_time / t.iterations as f64)
        .collect();
    Ok(SweepCell {
        case: case.to_string(),
        n_pre,
        n_br: sim.network.branches.len(),
        n_vars: tele.first().map_or(0, |t| t.n_vars),
        kkt_dim: tele.first().map_or(0, |t| t.kkt_dim),
        steps: trace.records.len(),
        median_iterations: median(&iterations),
        median_iteration_time: median(&per_iteration),
        fallback_steps: trace.records.iter().filter(|r| r.fallback).count(),
    })
}

/// Runs SOCP-MPC for every (case, horizon) pair and fits the scaling slopes.
pub fn complexity_sweep(req: &SweepRequest) -> Result<ComplexityReport, ExperimentError> {
    if req.cases.is_empty() || req.horizons.is_empty() {
        return Err(ExperimentError::Invalid(
            "sweep needs at least one case and one horizon".into(),
        ));
    }
    let grid: Vec<(String, usize)> = req
        .cases
        .iter()
        .flat_map(|c| req.horizons.iter().map(move |&h| (c.clone(), h)))
        .collect();
    let jobs = if req.timing_strict { 1 } else { req.jobs };
    let cells = parallel_map(&grid, jobs, |(case, h)| run_cell(case, *h, req))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let iters: Vec<(f64, f64)> = cells.iter().map(|c| (c.size(), c.median_iterations)).collect();
    let times: Vec<(f64, f64)> = cells.iter().map(|c| (c.size(), c.median_iteration_time)).collect();
    Ok(ComplexityReport {
        iteration_slope: loglog_slope(&iters),
        iteration_time_slope: loglog_slope(&times),
        cells,
        timing_strict: req.timing_strict,
    })
}
