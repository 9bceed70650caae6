//! Stacked conic program of one prediction horizon: decision layout, cost,
//! bounds, SoC/energy inequalities, branch-flow equalities and cones.

mod blocks;
mod layout;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blocks::{
    build_balance_block, build_cone_blocks, build_energy_block, build_grid_block, build_slack_block, build_soc_block,
    DrCoupling,
};
pub use layout::{build_layout, DecisionLayout};
pub use params::{
    BatteryParams, Horizon, PeriodPrices, StepPrices, TariffSchedule, DAY_HOURS, DEFAULT_DEGRADATION_COST,
};

use crate::netmodel::NetworkModel;
use crate::socp::{ConicProgram, ProgramError};
use sprs::CsMat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("dimension mismatch in {0}")]
    Dimension(String),
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("invalid battery parameters at bus {0}")]
    Battery(usize),
    #[error("invalid tariff: {0}")]
    Tariff(String),
    #[error("invalid horizon")]
    Horizon,
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// Which network representation the program carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowModel {
    /// Single-bus active power balance, no losses or limits.
    Lp,
    /// Relaxed branch flow with voltage and current limits.
    Socp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkLimits {
    /// Voltage magnitude band, pu.
    pub v_min: f64,
    pub v_max: f64,
    /// Fraction of ampacity held back in the optimization.
    pub current_margin: f64,
    /// Voltage band tightening in the optimization, pu.
    pub voltage_margin: f64,
    /// Main-grid exchange limit, pu.
    pub p_sys_max: f64,
}

impl Default for NetworkLimits {
    fn default() -> Self {
        Self {
            v_min: 0.9,
            v_max: 1.1,
            current_margin: 0.0,
            voltage_margin: 0.0,
            p_sys_max: 5.0,
        }
    }
}

/// Demand-response data over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrInput {
    /// `alpha[tp][bus_idx][n]`, consumption change per $/kWh of incentive (≤ 0).
    pub alpha: Vec<Vec<Vec<f64>>>,
    /// `bound[tp][n]`: symmetric incentive bound.
    pub bound: Vec<Vec<f64>>,
    /// Daily cap on the net shifted energy, pu·h.
    pub epsilon: f64,
    /// Shift already realized earlier in the day, pu·h.
    pub history: f64,
}

impl DrInput {
    pub fn n_tp(&self) -> usize {
        self.alpha.len()
    }

    /// Sensitivity summed over buses, `[tp][n]`.
    pub fn alpha_sum(&self, n_pre: usize) -> Vec<Vec<f64>> {
        self.alpha
            .iter()
            .map(|per_bus| (0..n_pre).map(|n| per_bus.iter().map(|a| a[n]).sum()).collect())
            .collect()
    }
}

/// Everything needed to assemble one horizon.
#[derive(Debug, Clone)]
pub struct ProblemInput<'a> {
    pub network: &'a NetworkModel,
    pub batteries: &'a [BatteryParams],
    pub horizon: Horizon,
    pub prices: Vec<StepPrices>,
    /// `[n][bus_idx]` uncontrolled net injections, pu.
    pub fixed_injection: Vec<Vec<f64>>,
    /// Current SoC per battery.
    pub soc: Vec<f64>,
    pub dr: Option<DrInput>,
    pub limits: NetworkLimits,
    /// Symmetric branch power bound, pu.
    pub p_branch_max: f64,
}

/// Cost coefficients per column; branch powers, voltages and incentives are free of cost.
pub fn build_cost_vector(
    layout: &DecisionLayout,
    prices: &[StepPrices],
    batteries: &[BatteryParams],
    resistances: &[f64],
    horizon: &Horizon,
) -> Vec<f64> {
    let mut f = vec![0.0; layout.dim()];
    for n in 0..layout.n_pre {
        let dt = horizon.dt[n];
        let c = &prices[n];
        for (b, batt) in batteries.iter().enumerate() {
            f[layout.dis(b, n)] = dt * ((1.0 - batt.eta_dis) * c.buy + batt.c_deg);
            f[layout.ch(b, n)] = dt * ((1.0 - batt.eta_ch) * c.buy + batt.c_deg);
        }
        f[layout.buy(n)] = dt * c.buy;
        f[layout.sell(n)] = -dt * c.sell;
        if layout.flow {
            for (e, r) in resistances.iter().enumerate() {
                f[layout.l(n, e)] = dt * c.buy * r;
            }
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSpec {
    /// Per battery, pu.
    pub battery_max: Vec<f64>,
    pub p_sys_max: f64,
    pub p_branch_max: f64,
    /// Per branch squared-current limit.
    pub l_max: Vec<f64>,
    /// Squared voltage band.
    pub v_range: (f64, f64),
    /// `[tp][n]`
    pub dc_bound: Vec<Vec<f64>>,
}

pub fn build_bounds(layout: &DecisionLayout, spec: &BoundSpec) -> (Vec<f64>, Vec<f64>) {
    let dim = layout.dim();
    let mut lo = vec![0.0; dim];
    let mut hi = vec![0.0; dim];
    for n in 0..layout.n_pre {
        for b in 0..layout.n_batt {
            hi[layout.dis(b, n)] = spec.battery_max[b];
            hi[layout.ch(b, n)] = spec.battery_max[b];
        }
        hi[layout.buy(n)] = spec.p_sys_max;
        hi[layout.sell(n)] = spec.p_sys_max;
        if layout.flow {
            for e in 0..layout.n_br {
                lo[layout.p(n, e)] = -spec.p_branch_max;
                hi[layout.p(n, e)] = spec.p_branch_max;
                hi[layout.l(n, e)] = spec.l_max[e];
                lo[layout.v(n, e)] = spec.v_range.0;
                hi[layout.v(n, e)] = spec.v_range.1;
            }
        }
        for t in 0..layout.n_tp {
            lo[layout.dc(t, n)] = -spec.dc_bound[t][n];
            hi[layout.dc(t, n)] = spec.dc_bound[t][n];
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub program: ConicProgram,
    pub layout: DecisionLayout,
    /// Rows of the equality block that come from the branch-flow recipe (the
    /// rest are main-grid exchange rows).
    pub grid_rows: usize,
}

fn vstack(blocks: &[(CsMat<f64>, Vec<f64>)], cols: usize) -> (CsMat<f64>, Vec<f64>) {
    let mut trip = Vec::new();
    let mut rhs = Vec::new();
    for (m, b) in blocks {
        let r0 = rhs.len();
        for (v, (r, c)) in m.iter() {
            trip.push((r0 + r, c, *v));
        }
        rhs.extend_from_slice(b);
    }
    (crate::socp::sparse_from_triplets(rhs.len(), cols, &trip), rhs)
}

pub fn assemble_program(input: &ProblemInput, model: FlowModel) -> Result<Assembled, AssemblyError> {
    input.horizon.validate()?;
    for b in input.batteries {
        b.validate()?;
    }
    let net = input.network;
    let n_pre = input.horizon.len();
    if input.prices.len() < n_pre || input.soc.len() != input.batteries.len() {
        return Err(AssemblyError::Dimension("prices or SoC".into()));
    }
    let n_tp = input.dr.as_ref().map_or(0, DrInput::n_tp);
    let layout = match model {
        FlowModel::Socp => build_layout(n_pre, input.batteries.len(), net.n_br(), n_tp),
        FlowModel::Lp => DecisionLayout::lp(n_pre, input.batteries.len(), n_tp),
    };
    let s_base = net.bases.s_base_mva;
    let buses: Vec<usize> = input.batteries.iter().map(|b| b.bus).collect();

    let mut program = ConicProgram::new(layout.dim());
    program.cost = build_cost_vector(
        &layout,
        &input.prices,
        input.batteries,
        &net.resistances(),
        &input.horizon,
    );

    let lim = &input.limits;
    let v_lo = (lim.v_min + lim.voltage_margin).powi(2);
    let v_hi = (lim.v_max - lim.voltage_margin).powi(2);
    let spec = BoundSpec {
        battery_max: input.batteries.iter().map(|b| b.p_max_pu(s_base)).collect(),
        p_sys_max: lim.p_sys_max,
        p_branch_max: input.p_branch_max,
        l_max: net
            .branches
            .iter()
            .map(|b| (b.i_max_pu * (1.0 - lim.current_margin)).powi(2))
            .collect(),
        v_range: (v_lo, v_hi),
        dc_bound: input.dr.as_ref().map(|d| d.bound.clone()).unwrap_or_default(),
    };
    if spec.dc_bound.len() != n_tp || spec.dc_bound.iter().any(|b| b.len() < n_pre) {
        return Err(AssemblyError::Dimension("incentive bounds".into()));
    }
    (program.lower, program.upper) = build_bounds(&layout, &spec);

    let mut ineq = vec![build_soc_block(
        &layout,
        input.batteries,
        &input.soc,
        &input.horizon,
        s_base,
    )];
    if let Some(dr) = &input.dr {
        ineq.push(build_energy_block(
            &layout,
            &dr.alpha_sum(n_pre),
            &input.horizon,
            dr.history,
            dr.epsilon,
        ));
    }
    (program.ineq, program.ineq_rhs) = vstack(&ineq, layout.dim());

    let coupling = input.dr.as_ref().map(|d| DrCoupling { alpha: &d.alpha });
    let grid_rows;
    match model {
        FlowModel::Socp => {
            let grid = build_grid_block(net, &layout, &input.fixed_injection, coupling.as_ref(), &buses)?;
            let slack = build_slack_block(net, &layout, &input.fixed_injection, coupling.as_ref(), &buses)?;
            grid_rows = grid.1.len();
            (program.eq, program.eq_rhs) = vstack(&[grid, slack], layout.dim());
            program.cones = build_cone_blocks(net, &layout);
        }
        FlowModel::Lp => {
            grid_rows = 0;
            (program.eq, program.eq_rhs) =
                build_balance_block(net, &layout, &input.fixed_injection, coupling.as_ref(), &buses)?;
        }
    }
    program.validate()?;
    Ok(Assembled {
        program,
        layout,
        grid_rows,
    })
}
