//! Constraint blocks of the stacked program.

use sprs::CsMat;

use super::layout::DecisionLayout;
use super::params::{BatteryParams, Horizon};
use super::AssemblyError;
use crate::netmodel::NetworkModel;
use crate::socp::{sparse_from_triplets, ConeBlock};

type Block = (CsMat<f64>, Vec<f64>);

/// SoC window rows: for every battery `N` upper rows then `N` lower rows on
/// cumulative charge/discharge sums. The lower row of the step that ends the
/// day instead keeps the SoC at or above its initial value.
pub fn build_soc_block(
    layout: &DecisionLayout,
    batteries: &[BatteryParams],
    soc: &[f64],
    horizon: &Horizon,
    s_base_mva: f64,
) -> Block {
    let n = layout.n_pre;
    let mut trip = Vec::new();
    let mut rhs = Vec::with_capacity(2 * n * batteries.len());
    let terminal = horizon.terminal();
    for (b, batt) in batteries.iter().enumerate() {
        let e = batt.e_max_pu(s_base_mva);
        let row0 = 2 * n * b;
        for i in 0..n {
            for m in 0..=i {
                let dt = horizon.dt[m];
                let dis = -dt / (e * batt.eta_dis);
                let ch = batt.eta_ch * dt / e;
                trip.push((row0 + i, layout.dis(b, m), dis));
                trip.push((row0 + i, layout.ch(b, m), ch));
                trip.push((row0 + n + i, layout.dis(b, m), -dis));
                trip.push((row0 + n + i, layout.ch(b, m), -ch));
            }
        }
        rhs.extend(std::iter::repeat_n(batt.sigma_max - soc[b], n));
        rhs.extend(std::iter::repeat_n(soc[b] - batt.sigma_min, n));
        if let Some(t) = terminal {
            rhs[row0 + n + t] = soc[b] - batt.sigma0;
        }
    }
    (sparse_from_triplets(rhs.len(), layout.dim(), &trip), rhs)
}

/// Two rows bounding the net incentive-driven energy shift of the day,
/// including `history` (already realized shift). `alpha_sum[tp][n]` is the
/// summed sensitivity of type `tp`; steps past the end of the day get no
/// coefficient.
pub fn build_energy_block(
    layout: &DecisionLayout,
    alpha_sum: &[Vec<f64>],
    horizon: &Horizon,
    history: f64,
    epsilon: f64,
) -> Block {
    let mut trip = Vec::new();
    let in_day = horizon.in_day().min(layout.n_pre);
    for (tp, a) in alpha_sum.iter().enumerate() {
        for n in 0..in_day {
            let w = a[n] * horizon.dt[n];
            if w != 0.0 {
                trip.push((0, layout.dc(tp, n), w));
                trip.push((1, layout.dc(tp, n), -w));
            }
        }
    }
    (
        sparse_from_triplets(2, layout.dim(), &trip),
        vec![epsilon - history, epsilon + history],
    )
}

/// `‖[2P_e, v_in − l_e]‖ ≤ v_in + l_e` for every step and branch, step-major.
pub fn build_cone_blocks(network: &NetworkModel, layout: &DecisionLayout) -> Vec<ConeBlock> {
    let dim = layout.dim();
    let mut cones = Vec::with_capacity(layout.n_pre * network.n_br());
    for n in 0..layout.n_pre {
        for (e, br) in network.branches.iter().enumerate() {
            let p = layout.p(n, e);
            let l = layout.l(n, e);
            let mut a = vec![(0, p, 2.0), (1, l, -1.0)];
            let cone = match NetworkModel::voltage_slot(br.from_bus) {
                None => ConeBlock::from_triplets(dim, &a, vec![0.0, -1.0], &[(l, 1.0)], -1.0),
                Some(slot) => {
                    let v = layout.v(n, slot);
                    a.push((1, v, 1.0));
                    ConeBlock::from_triplets(dim, &a, vec![0.0, 0.0], &[(v, 1.0), (l, 1.0)], 0.0)
                }
            };
            cones.push(cone);
        }
    }
    cones
}

/// Demand-response coupling: `alpha[tp][bus_idx][n]` is the sensitivity of
/// the type-`tp` loads at bus `bus_idx + 1`. A step-`n` row receives
/// `−α(i)` on the incentive of every step `i ≤ n`.
pub struct DrCoupling<'a> {
    pub alpha: &'a [Vec<Vec<f64>>],
}

impl DrCoupling<'_> {
    fn push_row(
        &self,
        layout: &DecisionLayout,
        bus_id: usize,
        row: usize,
        n: usize,
        trip: &mut Vec<(usize, usize, f64)>,
    ) {
        for (tp, per_bus) in self.alpha.iter().enumerate() {
            let a = &per_bus[bus_id - 1];
            for (i, &ai) in a.iter().enumerate().take(n + 1) {
                if ai != 0.0 {
                    trip.push((row, layout.dc(tp, i), -ai));
                }
            }
        }
    }
}

fn check_inputs(
    network: &NetworkModel,
    layout: &DecisionLayout,
    fixed_injection: &[Vec<f64>],
    battery_buses: &[usize],
    dr: Option<&DrCoupling>,
) -> Result<(), AssemblyError> {
    if fixed_injection.len() < layout.n_pre || fixed_injection.iter().any(|r| r.len() != network.n_bus()) {
        return Err(AssemblyError::Dimension("fixed injections".into()));
    }
    if battery_buses.len() != layout.n_batt {
        return Err(AssemblyError::Dimension("battery buses".into()));
    }
    if let Some(&bus) = battery_buses.iter().find(|&&b| !network.has_bus(b)) {
        return Err(AssemblyError::UnknownBus(bus));
    }
    if let Some(dr) = dr {
        let bad = dr.alpha.len() != layout.n_tp
            || dr
                .alpha
                .iter()
                .any(|t| t.len() != network.n_bus() || t.iter().any(|a| a.len() < layout.n_pre));
        if bad {
            return Err(AssemblyError::Dimension("price sensitivities".into()));
        }
    }
    Ok(())
}

/// Branch power balance and voltage drop rows, two per branch per step
/// (step-major, then branch). `fixed_injection[n][bus_idx]` holds the
/// uncontrolled net injections.
pub fn build_grid_block(
    network: &NetworkModel,
    layout: &DecisionLayout,
    fixed_injection: &[Vec<f64>],
    dr: Option<&DrCoupling>,
    battery_buses: &[usize],
) -> Result<Block, AssemblyError> {
    check_inputs(network, layout, fixed_injection, battery_buses, dr)?;
    let n_br = network.n_br();
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; 2 * n_br * layout.n_pre];
    for n in 0..layout.n_pre {
        for (e, br) in network.branches.iter().enumerate() {
            let p_row = 2 * n_br * n + 2 * e;
            let v_row = p_row + 1;
            let (inb, outb, r) = (br.from_bus, br.to_bus, br.r_pu);

            trip.push((p_row, layout.p(n, e), 1.0));
            for &c in network.child_branches(outb) {
                trip.push((p_row, layout.p(n, c), -1.0));
            }
            trip.push((p_row, layout.l(n, e), -r));
            rhs[p_row] = -fixed_injection[n][outb - 1];

            let out_slot = NetworkModel::voltage_slot(outb).expect("branch ends at a non-slack bus");
            trip.push((v_row, layout.v(n, out_slot), 1.0));
            match NetworkModel::voltage_slot(inb) {
                None => rhs[v_row] = 1.0,
                Some(slot) => trip.push((v_row, layout.v(n, slot), -1.0)),
            }
            trip.push((v_row, layout.l(n, e), -r * r));
            trip.push((v_row, layout.p(n, e), 2.0 * r));

            if let Some(dr) = dr {
                dr.push_row(layout, outb, p_row, n, &mut trip);
            }
        }
        for (b, &bus) in battery_buses.iter().enumerate() {
            if let Some(e) = network.parent_branch(bus) {
                let p_row = 2 * n_br * n + 2 * e;
                trip.push((p_row, layout.dis(b, n), 1.0));
                trip.push((p_row, layout.ch(b, n), -1.0));
            }
        }
    }
    Ok((sparse_from_triplets(rhs.len(), layout.dim(), &trip), rhs))
}

/// Main-grid exchange rows, one per step:
/// `P_buy − P_sell − Σ_{e leaving the slack} P_e + (slack-bus devices) = −P_fixed(slack)`.
pub fn build_slack_block(
    network: &NetworkModel,
    layout: &DecisionLayout,
    fixed_injection: &[Vec<f64>],
    dr: Option<&DrCoupling>,
    battery_buses: &[usize],
) -> Result<Block, AssemblyError> {
    check_inputs(network, layout, fixed_injection, battery_buses, dr)?;
    let mut trip = Vec::new();
    let mut rhs = Vec::with_capacity(layout.n_pre);
    for n in 0..layout.n_pre {
        trip.push((n, layout.buy(n), 1.0));
        trip.push((n, layout.sell(n), -1.0));
        for &e in network.child_branches(1) {
            trip.push((n, layout.p(n, e), -1.0));
        }
        for (b, &bus) in battery_buses.iter().enumerate() {
            if bus == 1 {
                trip.push((n, layout.dis(b, n), 1.0));
                trip.push((n, layout.ch(b, n), -1.0));
            }
        }
        if let Some(dr) = dr {
            dr.push_row(layout, 1, n, n, &mut trip);
        }
        rhs.push(-fixed_injection[n][0]);
    }
    Ok((sparse_from_triplets(layout.n_pre, layout.dim(), &trip), rhs))
}

/// Single-bus balance used when branch flows are not modeled:
/// `P_buy − P_sell + Σ(P_dis − P_ch) − Σ α ΔC = −Σ P_fixed`.
pub fn build_balance_block(
    network: &NetworkModel,
    layout: &DecisionLayout,
    fixed_injection: &[Vec<f64>],
    dr: Option<&DrCoupling>,
    battery_buses: &[usize],
) -> Result<Block, AssemblyError> {
    check_inputs(network, layout, fixed_injection, battery_buses, dr)?;
    let mut trip = Vec::new();
    let mut rhs = Vec::with_capacity(layout.n_pre);
    for n in 0..layout.n_pre {
        trip.push((n, layout.buy(n), 1.0));
        trip.push((n, layout.sell(n), -1.0));
        for b in 0..layout.n_batt {
            trip.push((n, layout.dis(b, n), 1.0));
            trip.push((n, layout.ch(b, n), -1.0));
        }
        if let Some(dr) = dr {
            for bus in 1..=network.n_bus() {
                dr.push_row(layout, bus, n, n, &mut trip);
            }
        }
        rhs.push(-fixed_injection[n].iter().sum::<f64>());
    }
    Ok((sparse_from_triplets(layout.n_pre, layout.dim(), &trip), rhs))
}
