//! Exact active-power branch-flow plant, relaxation gap and security checks.
//!
//! Per branch `i → j` with resistance `r`:
//!
//! ```text
//! P_j = Σ_{k ∈ children(j)} P_jk − P_ij + l_ij r
//! v_j = v_i + l_ij r² − 2 P_ij r
//! l_ij = P_ij² / v_i
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::NetworkModel;

pub const SWEEP_TOL: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 100;
pub const SECURITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("power flow did not converge in {sweeps} sweeps (residual {residual:.3e})")]
    NonConvergence { sweeps: usize, residual: f64 },
    #[error("voltage collapse at bus {bus} (v = {v:.4})")]
    VoltageCollapse { bus: usize, v: f64 },
    #[error("expected {expected} bus injections, got {found}")]
    InjectionLength { expected: usize, found: usize },
    #[error("non-finite injection at bus {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    /// Sending-end active power per branch.
    pub branch_p: Vec<f64>,
    /// Squared current per branch.
    pub branch_l: Vec<f64>,
    /// Squared voltage per non-slack bus; entry `k` is bus `k + 2`.
    pub bus_v: Vec<f64>,
    /// Net injection per bus; entry `k` is bus `k + 1`.
    pub injections: Vec<f64>,
    pub losses: f64,
    /// Power drawn from the main grid at the slack bus.
    pub slack_import: f64,
}

impl GridState {
    /// Squared voltage at `bus_id` (the slack is fixed at 1).
    pub fn v(&self, bus_id: usize) -> f64 {
        if bus_id <= 1 {
            1.0
        } else {
            self.bus_v[bus_id - 2]
        }
    }

    /// `step,branch,P_pu,l_pu` rows (branch ids are 1-based).
    pub fn branch_rows(&self, step: usize) -> impl Iterator<Item = String> + '_ {
        self.branch_p
            .iter()
            .zip(&self.branch_l)
            .enumerate()
            .map(move |(e, (p, l))| format!("{step},{},{p},{l}", e + 1))
    }

    /// `step,bus,v_squared_pu` rows for non-slack buses.
    pub fn bus_rows(&self, step: usize) -> impl Iterator<Item = String> + '_ {
        self.bus_v
            .iter()
            .enumerate()
            .map(move |(k, v)| format!("{step},{},{v}", k + 2))
    }
}

/// Backward/forward sweep from a flat start. `injections[k]` is the net
/// injection at bus `k + 1`; the slack entry only affects `slack_import`.
pub fn solve_plant_powerflow(network: &NetworkModel, injections: &[f64]) -> Result<GridState, PlantError> {
    let n_bus = network.n_bus();
    if injections.len() != n_bus {
        return Err(PlantError::InjectionLength {
            expected: n_bus,
            found: injections.len(),
        });
    }
    if let Some(k) = injections.iter().position(|x| !x.is_finite()) {
        return Err(PlantError::NonFinite(k + 1));
    }
    let n_br = network.n_br();
    let order = network.depth_order();
    let br = &network.branches;
    let mut p = vec![0.0; n_br];
    let mut l = vec![0.0; n_br];
    // Squared voltage indexed by bus id.
    let mut v = vec![1.0; n_bus + 1];
    let mut residual = f64::INFINITY;

    for _ in 0..MAX_SWEEPS {
        for &e in order.iter().rev() {
            let j = br[e].to_bus;
            let downstream: f64 = network.child_branches(j).iter().map(|&c| p[c]).sum();
            p[e] = downstream - injections[j - 1] + l[e] * br[e].r_pu;
        }
        for &e in order {
            let i = br[e].from_bus;
            l[e] = p[e] * p[e] / v[i];
            let r = br[e].r_pu;
            let j = br[e].to_bus;
            v[j] = v[i] + l[e] * r * r - 2.0 * p[e] * r;
            if v[j] <= 0.0 || !v[j].is_finite() {
                return Err(PlantError::VoltageCollapse { bus: j, v: v[j] });
            }
        }
        residual = model_residual(network, injections, &p, &l, &v);
        if residual <= SWEEP_TOL {
            let losses = (0..n_br).map(|e| l[e] * br[e].r_pu).sum();
            let slack_import = network.child_branches(1).iter().map(|&e| p[e]).sum::<f64>() - injections[0];
            return Ok(GridState {
                branch_p: p,
                branch_l: l,
                bus_v: v[2..].to_vec(),
                injections: injections.to_vec(),
                losses,
                slack_import,
            });
        }
    }
    Err(PlantError::NonConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

/// Largest residual of the three model equations; `v` is indexed by bus id.
fn model_residual(network: &NetworkModel, injections: &[f64], p: &[f64], l: &[f64], v: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (e, b) in network.branches.iter().enumerate() {
        let (i, j, r) = (b.from_bus, b.to_bus, b.r_pu);
        let downstream: f64 = network.child_branches(j).iter().map(|&c| p[c]).sum();
        worst = worst
            .max((downstream - p[e] + l[e] * r - injections[j - 1]).abs())
            .max((v[i] + l[e] * r * r - 2.0 * p[e] * r - v[j]).abs())
            .max((l[e] * v[i] - p[e] * p[e]).abs());
    }
    worst
}

/// Largest residual of the three model equations for a solved state.
pub fn state_residual(network: &NetworkModel, state: &GridState) -> f64 {
    let mut v = vec![1.0; network.n_bus() + 1];
    v[2..].copy_from_slice(&state.bus_v);
    model_residual(network, &state.injections, &state.branch_p, &state.branch_l, &v)
}

/// Power-weighted relative relaxation gap, in percent. `bus_v[k]` is the
/// squared voltage of bus `k + 2`.
pub fn relaxation_gap(network: &NetworkModel, p: &[f64], l: &[f64], bus_v: &[f64]) -> f64 {
    let total: f64 = p.iter().map(|x| x.abs()).sum();
    if total < 1e-12 {
        return 0.0;
    }
    let mut g = 0.0;
    for (e, b) in network.branches.iter().enumerate() {
        let vi = if b.from_bus == 1 { 1.0 } else { bus_v[b.from_bus - 2] };
        let p2 = p[e] * p[e];
        let vl = vi * l[e];
        if p2 < 1e-12 && vl < 1e-12 {
            continue;
        }
        g += p[e].abs() / total * (p2 - vl).abs() / p2.max(vl);
    }
    g * 100.0
}

pub fn state_gap(network: &NetworkModel, state: &GridState) -> f64 {
    relaxation_gap(network, &state.branch_p, &state.branch_l, &state.bus_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageLimits {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        Self { v_min: 0.9, v_max: 1.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageViolation {
    pub bus: usize,
    pub step: usize,
    /// Voltage magnitude in pu.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentViolation {
    pub branch: usize,
    pub step: usize,
    /// Current magnitude in pu.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub voltage_violations: Vec<VoltageViolation>,
    pub current_violations: Vec<CurrentViolation>,
    pub max_v: f64,
    pub min_v: f64,
    /// Largest `|I| / I_max` over branches.
    pub max_loading: f64,
}

impl Default for SecurityReport {
    fn default() -> Self {
        Self {
            voltage_violations: Vec::new(),
            current_violations: Vec::new(),
            max_v: f64::NEG_INFINITY,
            min_v: f64::INFINITY,
            max_loading: 0.0,
        }
    }
}

impl SecurityReport {
    pub fn is_secure(&self) -> bool {
        self.voltage_violations.is_empty() && self.current_violations.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.voltage_violations.len() + self.current_violations.len()
    }

    pub fn merge(&mut self, other: &SecurityReport) {
        self.voltage_violations.extend_from_slice(&other.voltage_violations);
        self.current_violations.extend_from_slice(&other.current_violations);
        self.max_v = self.max_v.max(other.max_v);
        self.min_v = self.min_v.min(other.min_v);
        self.max_loading = self.max_loading.max(other.max_loading);
    }
}

pub fn check_security(state: &GridState, limits: VoltageLimits, network: &NetworkModel, step: usize) -> SecurityReport {
    let mut rep = SecurityReport::default();
    for (k, &v2) in state.bus_v.iter().enumerate() {
        let v = v2.max(0.0).sqrt();
        rep.max_v = rep.max_v.max(v);
        rep.min_v = rep.min_v.min(v);
        if v < limits.v_min - SECURITY_TOL || v > limits.v_max + SECURITY_TOL {
            rep.voltage_violations.push(VoltageViolation {
                bus: k + 2,
                step,
                value: v,
            });
        }
    }
    for (e, (&l, b)) in state.branch_l.iter().zip(&network.branches).enumerate() {
        let i = l.max(0.0).sqrt();
        rep.max_loading = rep.max_loading.max(i / b.i_max_pu);
        if i > b.i_max_pu + SECURITY_TOL {
            rep.current_violations.push(CurrentViolation {
                branch: e + 1,
                step,
                value: i,
            });
        }
    }
    rep
}
