//! Cost accounting, demand-response settlement, summary report and trace
//! export.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::SimulationTrace;
use super::EmsMode;
use crate::assembler::TariffSchedule;

/// Realized economic cost of a trace, $, recomputed from the plant states.
/// Steps where the plant failed contribute nothing.
pub fn economic_cost(trace: &SimulationTrace, tariff: &TariffSchedule) -> f64 {
    let mut total = 0.0;
    for r in &trace.records {
        let Some(g) = &r.grid else { continue };
        let p = tariff.at(r.time_h);
        let scale = 1000.0 * trace.s_base_mva * r.dt_h;
        let buy = g.slack_import.max(0.0);
        let sell = (-g.slack_import).max(0.0);
        let mut batt = 0.0;
        for (b, params) in trace.batteries.iter().enumerate() {
            let (ch, dis) = (r.controls.ch[b], r.controls.dis[b]);
            batt += p.buy * (ch * (1.0 - params.eta_ch) + dis * (1.0 - params.eta_dis)) + params.c_deg * (ch + dis);
        }
        total += scale * (-p.sell * sell + p.buy * (buy + g.losses) + batt);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrSettlement {
    /// `Σ_k Σ_j C_buy,type(j)·α_j·ΔC_type·Δt`, $.
    pub user_cost: f64,
    /// Energy change per load relative to its base profile, percent.
    pub energy_change_pct: Vec<f64>,
}

pub fn dr_settlement(trace: &SimulationTrace, tariff: &TariffSchedule) -> DrSettlement {
    let n_load = trace.load_types.len();
    let mut user_cost = 0.0;
    let mut changed = vec![0.0; n_load];
    let mut base = vec![0.0; n_load];
    for r in &trace.records {
        let p = tariff.at(r.time_h);
        for (j, &kind) in trace.load_types.iter().enumerate() {
            let dc = r.controls.dc.get(kind.index()).copied().unwrap_or(0.0);
            user_cost += p.buy_for(kind) * r.alpha[j] * dc * r.dt_h;
            changed[j] += r.load_offset[j] * r.dt_h;
            base[j] += r.base_load[j] * r.dt_h;
        }
    }
    let energy_change_pct = changed
        .iter()
        .zip(&base)
        .map(|(c, b)| if *b > 0.0 { 100.0 * c / b } else { 0.0 })
        .collect();
    DrSettlement {
        user_cost: 1000.0 * trace.s_base_mva * user_cost,
        energy_change_pct,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecurityStatus {
    Satisfied,
    Violated,
}

/// Mean and standard deviation of the per-step relaxation gap, percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tightness {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub steps: usize,
}

pub fn tightness_stats(trace: &SimulationTrace) -> Option<Tightness> {
    let gaps: Vec<f64> = trace.records.iter().filter_map(|r| r.gap).collect();
    if gaps.is_empty() {
        return None;
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    Some(Tightness {
        mean,
        std: var.sqrt(),
        max: gaps.iter().copied().fold(0.0, f64::max),
        steps: gaps.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub scenario: String,
    pub mode: String,
    pub dr_enabled: bool,
    /// $.
    pub economic_cost: f64,
    /// Mean decision wall time per solve, seconds.
    pub decision_time_per_step: f64,
    /// Smallest and largest per-load energy change, percent.
    pub load_energy_change_pct: [f64; 2],
    #[serde(rename = "dr_cost_for_users")]
    pub dr_user_cost: f64,
    #[serde(rename = "security_constraints")]
    pub security_status: SecurityStatus,
    pub violation_count: usize,
    pub min_voltage: f64,
    pub max_voltage: f64,
    pub max_loading: f64,
    /// Diesel generation cost, $.
    pub diesel_cost: f64,
    pub fallback_steps: usize,
    pub exclusivity_breaches: usize,
    pub final_soc: Vec<f64>,
    pub tightness: Option<Tightness>,
    pub mean_iterations: f64,
}

impl CostReport {
    pub fn from_trace(trace: &SimulationTrace, tariff: &TariffSchedule, diesel_kw: f64, dr_enabled: bool) -> Self {
        let dr = dr_settlement(trace, tariff);
        let mut security = crate::opf::SecurityReport::default();
        for r in &trace.records {
            security.merge(&r.security);
        }
        let solves: Vec<_> = trace.records.iter().filter_map(|r| r.telemetry.as_ref()).collect();
        let mean = |f: &dyn Fn(&super::Telemetry) -> f64| {
            if solves.is_empty() {
                0.0
            } else {
                solves.iter().map(|t| f(t)).sum::<f64>() / solves.len() as f64
            }
        };
        let (lo, hi) = dr
            .energy_change_pct
            .iter()
            .map(|p| p.abs())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p), hi.max(p)));
        let diesel_cost = trace
            .records
            .iter()
            .map(|r| tariff.at(r.time_h).dg * diesel_kw * r.dt_h)
            .sum();
        Self {
            scenario: trace.scenario.clone(),
            mode: trace.mode.to_string(),
            dr_enabled,
            economic_cost: economic_cost(trace, tariff),
            decision_time_per_step: mean(&|t| t.decision_time),
            load_energy_change_pct: if lo.is_finite() { [lo, hi] } else { [0.0, 0.0] },
            dr_user_cost: dr.user_cost,
            security_status: if security.is_secure() {
                SecurityStatus::Satisfied
            } else {
                SecurityStatus::Violated
            },
            violation_count: security.violation_count(),
            min_voltage: security.min_v,
            max_voltage: security.max_v,
            max_loading: security.max_loading,
            diesel_cost,
            fallback_steps: trace.records.iter().filter(|r| r.fallback).count(),
            exclusivity_breaches: trace.records.iter().filter(|r| r.exclusivity_breach).count(),
            final_soc: trace.records.last().map(|r| r.soc.clone()).unwrap_or_default(),
            tightness: tightness_stats(trace),
            mean_iterations: mean(&|t| t.iterations as f64),
        }
    }
}

fn mode_tag(mode: EmsMode) -> String {
    mode.to_string().replace('-', "_")
}

/// Writes per-step CSV files for one trace into `dir`:
/// `<mode>_steps.csv`, `<mode>_batteries.csv`, `<mode>_buses.csv`,
/// `<mode>_branches.csv`. Returns the written paths.
pub fn write_trace_csv(trace: &SimulationTrace, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let tag = mode_tag(trace.mode);
    let mut steps = String::from(
        "step,time_h,import_pu,losses_pu,planned_buy_pu,planned_sell_pu,cost_usd,gap_pct,iterations,solve_time_s,fallback,violations,shift_planned,shift_realized\n",
    );
    let mut batt = String::from("step,time_h,battery,bus,dis_pu,ch_pu,soc\n");
    let mut buses = String::from("step,bus,v_squared_pu\n");
    let mut branches = String::from("step,branch,p_pu,l_pu\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
    for r in &trace.records {
        let (import, losses) = r
            .grid
            .as_ref()
            .map_or((None, None), |g| (Some(g.slack_import), Some(g.losses)));
        steps.push_str(&format!(
            "{},{:.6},{},{},{},{},{:.6},{},{},{},{},{},{:.9},{:.9}\n",
            r.step,
            r.time_h,
            opt(import),
            opt(losses),
            opt(r.planned_buy),
            opt(r.planned_sell),
            r.cost.total,
            opt(r.gap),
            r.telemetry
                .as_ref()
                .map(|t| t.iterations.to_string())
                .unwrap_or_default(),
            opt(r.telemetry.as_ref().map(|t| t.solve_time)),
            r.fallback,
            r.security.violation_count(),
            r.shift_planned,
            r.shift_realized,
        ));
        for (b, params) in trace.batteries.iter().enumerate() {
            batt.push_str(&format!(
                "{},{:.6},{},{},{:.9},{:.9},{:.9}\n",
                r.step,
                r.time_h,
                b + 1,
                params.bus,
                r.controls.dis[b],
                r.controls.ch[b],
                r.soc[b]
            ));
        }
        if let Some(g) = &r.grid {
            for row in g.bus_rows(r.step) {
                buses.push_str(&row);
                buses.push('\n');
            }
            for row in g.branch_rows(r.step) {
                branches.push_str(&row);
                branches.push('\n');
            }
        }
    }
    let mut paths = Vec::new();
    for (part, text) in [
        ("steps", steps),
        ("batteries", batt),
        ("buses", buses),
        ("branches", branches),
    ] {
        let path = dir.join(format!("{tag}_{part}.csv"));
        fs::write(&path, text)?;
        paths.push(path);
    }
    Ok(paths)
}
