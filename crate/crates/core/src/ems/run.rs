//! Decision loop: horizon assembly, solve, control extraction and plant
//! application.

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{EmsError, EmsMode, EmsOptions, HorizonForecast, Policy, Simulation};
use crate::assembler::{assemble_program, Assembled, DrInput, FlowModel, Horizon, ProblemInput, StepPrices, DAY_HOURS};
use crate::forecast::{price_sensitivity, LoadType};
use crate::opf::{check_security, relaxation_gap, solve_plant_powerflow, GridState, SecurityReport, VoltageLimits};
use crate::socp::{solve, SolveStatus};

/// Values below this are treated as zero when extracting controls.
const ZERO_TOL: f64 = 1e-9;
/// Mutual-exclusivity threshold on planned powers.
const EXCLUSIVITY_TOL: f64 = 1e-6;

/// Controls applied over one decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub dis: Vec<f64>,
    pub ch: Vec<f64>,
    /// Incentive change per load type, $/kWh.
    pub dc: Vec<f64>,
    /// Planned net shifted energy of this step, pu·h.
    pub planned_shift: f64,
}

impl Controls {
    pub fn idle(n_batt: usize, n_tp: usize) -> Self {
        Self {
            dis: vec![0.0; n_batt],
            ch: vec![0.0; n_batt],
            dc: vec![0.0; n_tp],
            planned_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub status: SolveStatus,
    pub iterations: usize,
    /// Solver wall time, seconds.
    pub solve_time: f64,
    pub per_iteration_time: f64,
    /// Forecast, assembly and solve, seconds.
    pub decision_time: f64,
    pub n_vars: usize,
    pub kkt_dim: usize,
}

/// Optimized schedule over one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub horizon: Horizon,
    pub dis: Vec<Vec<f64>>,
    pub ch: Vec<Vec<f64>>,
    /// `[tp][n]`.
    pub dc: Vec<Vec<f64>>,
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
    /// Summed sensitivity used by the plan, `[tp][n]`.
    pub alpha_sum: Vec<Vec<f64>>,
    /// Relaxation gap per step, percent (branch-flow model only).
    pub gap: Vec<f64>,
    pub objective: f64,
}

impl Plan {
    fn controls(&self, n: usize, dt: f64) -> Controls {
        let clean = |v: f64| if v.abs() < ZERO_TOL { 0.0 } else { v };
        let dc: Vec<f64> = self.dc.iter().map(|d| clean(d[n])).collect();
        let planned_shift = dc.iter().zip(&self.alpha_sum).map(|(c, a)| a[n] * c * dt).sum();
        Controls {
            dis: self.dis.iter().map(|d| clean(d[n]).max(0.0)).collect(),
            ch: self.ch.iter().map(|c| clean(c[n]).max(0.0)).collect(),
            dc,
            planned_shift,
        }
    }

    fn exclusivity_breach(&self, n: usize) -> bool {
        self.buy[n].min(self.sell[n]) > EXCLUSIVITY_TOL
            || self
                .dis
                .iter()
                .zip(&self.ch)
                .any(|(d, c)| d[n].min(c[n]) > EXCLUSIVITY_TOL)
    }
}

/// Plant-side state carried between decision steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub soc: Vec<f64>,
    /// Persistent consumption change per load from past incentives, pu.
    pub load_offset: Vec<f64>,
    /// Planned net shifted energy so far, pu·h.
    pub shift_planned: f64,
    /// Realized net shifted energy so far, pu·h.
    pub shift_realized: f64,
}

impl PlantState {
    pub fn initial(sim: &Simulation) -> Self {
        Self {
            soc: sim.batteries.iter().map(|b| b.sigma0).collect(),
            load_offset: vec![0.0; sim.config.loads.len()],
            shift_planned: 0.0,
            shift_realized: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepCost {
    pub grid_buy: f64,
    pub grid_sell: f64,
    pub loss: f64,
    pub battery_loss: f64,
    pub degradation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time_h: f64,
    pub dt_h: f64,
    pub prices: StepPrices,
    /// Controls as applied after saturation.
    pub controls: Controls,
    pub planned_buy: Option<f64>,
    pub planned_sell: Option<f64>,
    pub grid: Option<GridState>,
    pub plant_error: Option<String>,
    pub security: SecurityReport,
    /// SoC after the step.
    pub soc: Vec<f64>,
    /// Realized base consumption per load, pu.
    pub base_load: Vec<f64>,
    /// Realized sensitivity per load.
    pub alpha: Vec<f64>,
    /// Consumption change per load after the step, pu.
    pub load_offset: Vec<f64>,
    pub shift_planned: f64,
    pub shift_realized: f64,
    pub cost: StepCost,
    pub gap: Option<f64>,
    pub telemetry: Option<Telemetry>,
    pub fallback: bool,
    pub exclusivity_breach: bool,
}

fn dr_inputs(
    sim: &Simulation,
    horizon: &Horizon,
    fc: &HorizonForecast,
    prices: &[StepPrices],
    history: f64,
) -> DrInput {
    let n_pre = horizon.len();
    let n_bus = sim.network.n_bus();
    let dr = &sim.config.demand_response;
    let types = sim.dr_types();
    let mut alpha = vec![vec![vec![0.0; n_pre]; n_bus]; types.len()];
    for (j, load) in sim.config.loads.iter().enumerate() {
        for n in 0..n_pre {
            let tariff = prices[n].buy_for(load.kind);
            let a =
                price_sensitivity(dr.elasticity(load.kind, prices[n].period), -fc.load[j][n], tariff).unwrap_or(0.0);
            alpha[load.kind.index()][load.bus - 1][n] += a;
        }
    }
    let bound = types
        .iter()
        .map(|&tp| prices.iter().map(|p| dr.k_adj * p.buy_for(tp)).collect())
        .collect();
    DrInput {
        alpha,
        bound,
        epsilon: sim.epsilon,
        history,
    }
}

/// Horizon program at time `t` together with the summed DR sensitivity it
/// was built with.
pub struct HorizonProgram {
    pub assembled: Assembled,
    pub horizon: Horizon,
    pub alpha_sum: Vec<Vec<f64>>,
}

/// Forecasts and assembles the program of one horizon starting at `t`.
pub fn build_horizon_program(
    sim: &Simulation,
    flow: FlowModel,
    t: f64,
    horizon: Horizon,
    state: &PlantState,
) -> Result<HorizonProgram, EmsError> {
    let fc = sim.forecast(t, &horizon)?;
    let n_pre = horizon.len();
    let prices: Vec<StepPrices> = horizon.start.iter().map(|&s| sim.config.tariff.at(s)).collect();
    let diesel = sim.diesel_injection();
    let fixed: Vec<Vec<f64>> = (0..n_pre)
        .map(|n| {
            let mut inj = diesel.clone();
            for (i, pv) in sim.config.pv.iter().enumerate() {
                inj[pv.bus - 1] += fc.solar[i][n];
            }
            for (j, load) in sim.config.loads.iter().enumerate() {
                inj[load.bus - 1] -= fc.load[j][n] + state.load_offset[j];
            }
            inj
        })
        .collect();
    let dr = sim
        .dr_enabled
        .then(|| dr_inputs(sim, &horizon, &fc, &prices, state.shift_planned));
    let alpha_sum = dr.as_ref().map(|d| d.alpha_sum(n_pre)).unwrap_or_default();
    let input = ProblemInput {
        network: &sim.network,
        batteries: &sim.batteries,
        horizon,
        prices,
        fixed_injection: fixed,
        soc: state.soc.clone(),
        dr,
        limits: sim.config.limits,
        p_branch_max: sim.p_branch_max(),
    };
    let assembled = assemble_program(&input, flow)?;
    Ok(HorizonProgram {
        assembled,
        horizon: input.horizon,
        alpha_sum,
    })
}

/// Assembles and solves one horizon from time `t`. Returns the telemetry and,
/// when the solver reached optimality, the plan.
pub fn plan_horizon(
    sim: &Simulation,
    flow: FlowModel,
    t: f64,
    horizon: Horizon,
    state: &PlantState,
    options: &EmsOptions,
) -> Result<(Option<Plan>, Option<Telemetry>), EmsError> {
    let clock = Instant::now();
    let HorizonProgram {
        assembled: asm,
        horizon,
        alpha_sum,
    } = build_horizon_program(sim, flow, t, horizon, state)?;
    let n_pre = horizon.len();
    let result = match solve(&asm.program, &options.solver) {
        Ok(r) => r,
        Err(e) => {
            warn!("t={t:.3}h: solver failed: {e}");
            return Ok((None, None));
        }
    };
    let tele = Telemetry {
        status: result.status,
        iterations: result.iterations,
        solve_time: result.solve_time,
        per_iteration_time: result.per_iteration_time,
        decision_time: clock.elapsed().as_secs_f64(),
        n_vars: asm.layout.dim(),
        kkt_dim: result.kkt_dim,
    };
    debug!(
        "t={t:.3}h {flow:?}: {:?} in {} iterations",
        result.status, result.iterations
    );
    if !result.is_optimal() {
        warn!("t={t:.3}h: solve ended with {:?}", result.status);
        return Ok((None, Some(tele)));
    }
    let lay = &asm.layout;
    let u = &result.u_star;
    let nb = sim.batteries.len();
    let gap = if lay.flow {
        (0..n_pre)
            .map(|n| {
                let p: Vec<f64> = (0..lay.n_br).map(|e| u[lay.p(n, e)]).collect();
                let l: Vec<f64> = (0..lay.n_br).map(|e| u[lay.l(n, e)]).collect();
                let v: Vec<f64> = (0..lay.n_br).map(|s| u[lay.v(n, s)]).collect();
                relaxation_gap(&sim.network, &p, &l, &v)
            })
            .collect()
    } else {
        Vec::new()
    };
    let plan = Plan {
        dis: (0..nb)
            .map(|b| (0..n_pre).map(|n| u[lay.dis(b, n)]).collect())
            .collect(),
        ch: (0..nb).map(|b| (0..n_pre).map(|n| u[lay.ch(b, n)]).collect()).collect(),
        dc: (0..lay.n_tp)
            .map(|tp| (0..n_pre).map(|n| u[lay.dc(tp, n)]).collect())
            .collect(),
        buy: (0..n_pre).map(|n| u[lay.buy(n)]).collect(),
        sell: (0..n_pre).map(|n| u[lay.sell(n)]).collect(),
        alpha_sum,
        gap,
        objective: result.objective,
        horizon,
    };
    Ok((Some(plan), Some(tele)))
}

/// Saturates controls so the SoC window and the shifted-energy cap hold
/// exactly on the plant.
fn saturate(sim: &Simulation, state: &PlantState, c: &mut Controls, dt: f64) {
    let s_base = sim.s_base();
    for (b, batt) in sim.batteries.iter().enumerate() {
        let e = batt.e_max_pu(s_base);
        let next = batt.next_soc(state.soc[b], c.dis[b], c.ch[b], dt, s_base);
        if next > batt.sigma_max {
            let excess = (next - batt.sigma_max) * e / (batt.eta_ch * dt);
            c.ch[b] = (c.ch[b] - excess).max(0.0);
        } else if next < batt.sigma_min {
            let excess = (batt.sigma_min - next) * e * batt.eta_dis / dt;
            c.dis[b] = (c.dis[b] - excess).max(0.0);
        }
    }
    let cum = state.shift_planned + c.planned_shift;
    if sim.dr_enabled && cum.abs() > sim.epsilon && c.planned_shift.abs() > 0.0 {
        let room = sim.epsilon.copysign(cum) - state.shift_planned;
        let scale = (room / c.planned_shift).clamp(0.0, 1.0);
        for d in &mut c.dc {
            *d *= scale;
        }
        c.planned_shift *= scale;
    }
}

/// Applies `controls` over decision step `k` on the plant and advances `state`.
pub fn apply_step(sim: &Simulation, state: &mut PlantState, controls: &Controls, k: usize) -> StepRecord {
    let dt = sim.dt_d();
    let t = k as f64 * dt;
    let s_base = sim.s_base();
    let prices = sim.config.tariff.at(t);
    let mut c = controls.clone();
    saturate(sim, state, &mut c, dt);

    let dr = &sim.config.demand_response;
    let mut inj = sim.diesel_injection();
    for (i, pv) in sim.config.pv.iter().enumerate() {
        inj[pv.bus - 1] += sim.realized_solar(i, t);
    }
    let mut base_load = Vec::with_capacity(sim.config.loads.len());
    let mut alpha = Vec::with_capacity(sim.config.loads.len());
    let mut step_shift = 0.0;
    for (j, load) in sim.config.loads.iter().enumerate() {
        let base = sim.realized_load(j, t);
        let a = if sim.dr_enabled {
            price_sensitivity(
                dr.elasticity(load.kind, prices.period),
                -base,
                prices.buy_for(load.kind),
            )
            .unwrap_or(0.0)
        } else {
            0.0
        };
        let dc = c.dc.get(load.kind.index()).copied().unwrap_or(0.0);
        state.load_offset[j] += a * dc;
        step_shift += a * dc * dt;
        inj[load.bus - 1] -= (base + state.load_offset[j]).max(0.0);
        base_load.push(base);
        alpha.push(a);
    }
    for (b, batt) in sim.batteries.iter().enumerate() {
        inj[batt.bus - 1] += c.dis[b] - c.ch[b];
    }
    state.shift_planned += c.planned_shift;
    state.shift_realized += step_shift;

    let limits = VoltageLimits {
        v_min: sim.config.limits.v_min,
        v_max: sim.config.limits.v_max,
    };
    let (grid, plant_error, security) = match solve_plant_powerflow(&sim.network, &inj) {
        Ok(g) => {
            let sec = check_security(&g, limits, &sim.network, k);
            (Some(g), None, sec)
        }
        Err(e) => {
            warn!("step {k}: plant power flow failed: {e}");
            let mut sec = SecurityReport::default();
            sec.voltage_violations.push(crate::opf::VoltageViolation {
                bus: 0,
                step: k,
                value: f64::NAN,
            });
            (None, Some(e.to_string()), sec)
        }
    };
    for (b, batt) in sim.batteries.iter().enumerate() {
        state.soc[b] = batt.next_soc(state.soc[b], c.dis[b], c.ch[b], dt, s_base);
    }

    let cost = grid
        .as_ref()
        .map(|g| step_cost(sim, &prices, g, &c, dt))
        .unwrap_or_default();
    StepRecord {
        step: k,
        time_h: t,
        dt_h: dt,
        prices,
        controls: c,
        planned_buy: None,
        planned_sell: None,
        grid,
        plant_error,
        security,
        soc: state.soc.clone(),
        base_load,
        alpha,
        load_offset: state.load_offset.clone(),
        shift_planned: state.shift_planned,
        shift_realized: state.shift_realized,
        cost,
        gap: None,
        telemetry: None,
        fallback: false,
        exclusivity_breach: false,
    }
}

/// `1000·S_base·Δt·[−C_sell P_sell + C_buy (P_buy + P_loss) + C_buy Σ(ch(1−η_ch) + dis(1−η_dis)) + C_deg Σ(ch + dis)]`
pub(super) fn step_cost(sim: &Simulation, prices: &StepPrices, g: &GridState, c: &Controls, dt: f64) -> StepCost {
    let scale = 1000.0 * sim.s_base() * dt;
    let buy = g.slack_import.max(0.0);
    let sell = (-g.slack_import).max(0.0);
    let mut battery_loss = 0.0;
    let mut degradation = 0.0;
    for (b, batt) in sim.batteries.iter().enumerate() {
        battery_loss += prices.buy * (c.ch[b] * (1.0 - batt.eta_ch) + c.dis[b] * (1.0 - batt.eta_dis));
        degradation += batt.c_deg * (c.ch[b] + c.dis[b]);
    }
    let cost = StepCost {
        grid_buy: scale * prices.buy * buy,
        grid_sell: -scale * prices.sell * sell,
        loss: scale * prices.buy * g.losses,
        battery_loss: scale * battery_loss,
        degradation: scale * degradation,
        total: 0.0,
    };
    StepCost {
        total: cost.grid_buy + cost.grid_sell + cost.loss + cost.battery_loss + cost.degradation,
        ..cost
    }
}

/// Simulation output for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub scenario: String,
    pub mode: EmsMode,
    pub s_base_mva: f64,
    pub batteries: Vec<crate::assembler::BatteryParams>,
    pub load_types: Vec<LoadType>,
    pub epsilon: f64,
    pub records: Vec<StepRecord>,
}

fn trace(sim: &Simulation, mode: EmsMode, records: Vec<StepRecord>) -> SimulationTrace {
    SimulationTrace {
        scenario: sim.config.name.clone(),
        mode,
        s_base_mva: sim.s_base(),
        batteries: sim.batteries.clone(),
        load_types: sim.load_types(),
        epsilon: sim.epsilon,
        records,
    }
}

fn mark(rec: &mut StepRecord, plan: Option<&Plan>, n: usize) {
    match plan {
        Some(p) => {
            rec.planned_buy = Some(p.buy[n]);
            rec.planned_sell = Some(p.sell[n]);
            rec.gap = p.gap.get(n).copied();
            rec.exclusivity_breach = p.exclusivity_breach(n);
            if rec.exclusivity_breach {
                warn!("step {}: planned powers not mutually exclusive", rec.step);
            }
        }
        None => rec.fallback = true,
    }
}

/// Day-ahead policy: one solve at the start of the day, schedule committed.
pub fn run_day_ahead(sim: &Simulation, flow: FlowModel, options: &EmsOptions) -> Result<SimulationTrace, EmsError> {
    let horizon = Horizon::hybrid(0.0, sim.dt_d(), sim.dt_p(), DAY_HOURS);
    let mut state = PlantState::initial(sim);
    let (plan, tele) = plan_horizon(sim, flow, 0.0, horizon, &state, options)?;
    let n_tp = sim.dr_types().len();
    let mut records = Vec::with_capacity(sim.k_d());
    for k in 0..sim.k_d() {
        let t = k as f64 * sim.dt_d();
        let (controls, n) = match &plan {
            Some(p) => {
                let n = (0..p.horizon.len())
                    .rev()
                    .find(|&n| p.horizon.start[n] <= t + 1e-9)
                    .unwrap_or(0);
                (p.controls(n, sim.dt_d()), n)
            }
            None => (Controls::idle(sim.batteries.len(), n_tp), 0),
        };
        let mut rec = apply_step(sim, &mut state, &controls, k);
        mark(&mut rec, plan.as_ref(), n);
        if k == 0 {
            rec.telemetry = tele.clone();
        }
        records.push(rec);
    }
    Ok(trace(sim, EmsMode::new(flow, Policy::DayAhead), records))
}

/// Fallback after a failed solve: previous incentives, batteries idle.
fn hold(previous: Option<&Controls>, n_batt: usize, n_tp: usize) -> Controls {
    let mut c = Controls::idle(n_batt, n_tp);
    if let Some(p) = previous {
        c.dc.clone_from(&p.dc);
        c.planned_shift = p.planned_shift;
    }
    c
}

/// Receding-horizon policy: re-solve every decision step and apply the first
/// control. A failed solve holds the previous incentives with batteries idle.
pub fn run_mpc(sim: &Simulation, flow: FlowModel, options: &EmsOptions) -> Result<SimulationTrace, EmsError> {
    let span = sim.config.horizon.span_h();
    let mut state = PlantState::initial(sim);
    let n_tp = sim.dr_types().len();
    let mut records = Vec::with_capacity(sim.k_d());
    for k in 0..sim.k_d() {
        let t = k as f64 * sim.dt_d();
        let horizon = Horizon::hybrid(t, sim.dt_d(), sim.dt_p(), span);
        let (plan, tele) = plan_horizon(sim, flow, t, horizon, &state, options)?;
        let controls = match &plan {
            Some(p) => p.controls(0, sim.dt_d()),
            None => hold(
                records.last().map(|r: &StepRecord| &r.controls),
                sim.batteries.len(),
                n_tp,
            ),
        };
        let mut rec = apply_step(sim, &mut state, &controls, k);
        mark(&mut rec, plan.as_ref(), 0);
        rec.telemetry = tele;
        records.push(rec);
    }
    Ok(trace(sim, EmsMode::new(flow, Policy::Mpc), records))
}

pub fn run_simulation(sim: &Simulation, mode: EmsMode, options: &EmsOptions) -> Result<SimulationTrace, EmsError> {
    match mode.policy {
        Policy::DayAhead => run_day_ahead(sim, mode.flow, options),
        Policy::Mpc => run_mpc(sim, mode.flow, options),
    }
}
