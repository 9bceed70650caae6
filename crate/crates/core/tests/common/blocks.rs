//! Independent dense, 1-based construction of the constraint blocks
//! and an entrywise comparison against the assembler.

// Index loops keep the 1-based construction readable.
#![allow(clippy::needless_range_loop)]

use gridmpc::assembler::{
    assemble_program, BatteryParams, DrInput, FlowModel, Horizon, NetworkLimits, ProblemInput, TariffSchedule,
};
use gridmpc::netmodel::NetworkModel;
use gridmpc::scenario::builtin_case;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprs::CsMat;

/// Dense matrix addressed with 1-based indices.
#[derive(Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            r >= 1 && r <= self.rows && c >= 1 && c <= self.cols,
            "({r}, {c}) outside {}x{}",
            self.rows,
            self.cols
        );
        self.data[(r - 1) * self.cols + (c - 1)] = v;
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.data[(r - 1) * self.cols + (c - 1)]
    }

    fn append_rows(&mut self, other: &Dense) {
        if self.rows == 0 {
            self.cols = other.cols;
        }
        assert_eq!(self.cols, other.cols);
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
    }
}

struct OracleBattery {
    e_max: f64,
    eta_ch: f64,
    eta_dis: f64,
    sigma_max: f64,
    sigma_min: f64,
    sigma_k: f64,
    sigma_0: f64,
}

/// Branch list row: [index, in-bus, out-bus, resistance].
type Ld = (usize, usize, usize, f64);

fn reference_soc(kd: usize, n_var: usize, batts: &[OracleBattery], dt: f64, k: usize) -> (Dense, Vec<f64>) {
    let n_batt = batts.len();
    let mut id_a = 0;
    let mut idx_b = 0;
    let mut b = vec![0.0; 2 * kd * n_batt];
    for bt in batts {
        for j in idx_b + 1..=idx_b + kd {
            b[j - 1] = bt.sigma_max - bt.sigma_k;
        }
        idx_b += kd;
        for j in idx_b + 1..=idx_b + kd {
            b[j - 1] = bt.sigma_k - bt.sigma_min;
        }
        idx_b += kd;
        b[idx_b - k + 1 - 1] = bt.sigma_k - bt.sigma_0;
    }
    let mut a = Dense::zeros(2 * kd * n_batt, n_var);
    for bt in batts {
        for i in 1..=kd {
            for c in id_a + 1..=id_a + i {
                a.set(id_a + i, c, -dt / (bt.e_max * bt.eta_dis));
            }
            for c in id_a + kd + 1..=id_a + kd + i {
                a.set(id_a + i, c, bt.eta_ch * dt / bt.e_max);
            }
            for c in id_a + 1..=id_a + i {
                a.set(id_a + kd + i, c, dt / (bt.e_max * bt.eta_dis));
            }
            for c in id_a + kd + 1..=id_a + kd + i {
                a.set(id_a + kd + i, c, -bt.eta_ch * dt / bt.e_max);
            }
        }
        id_a += 2 * kd;
    }
    (a, b)
}

/// `alpha_*_sum` are indexed by step of the day (1-based through the
/// slices); `dc_*` hold the incentives applied at earlier steps.
#[allow(clippy::too_many_arguments)]
fn reference_energy(
    n_pre: usize,
    kd: usize,
    n_br: usize,
    n_batt: usize,
    dt: f64,
    k: usize,
    alpha_resi_sum: &[f64],
    alpha_busi_sum: &[f64],
    e_adj_limit: f64,
    dc_resi: &[f64],
    dc_busi: &[f64],
) -> (Dense, Vec<f64>) {
    let offset = 2 * kd * n_batt + 2 * kd;
    let last = (k + n_pre - 1).min(kd);
    let diff = (k + n_pre - 1).saturating_sub(kd);
    let width = offset + kd * 3 * n_br + 2 * (last - k + 1 + diff);
    let mut a = Dense::zeros(2, width);
    let mut col = offset + kd * 3 * n_br;
    for (sum, _) in [(alpha_resi_sum, 0), (alpha_busi_sum, 1)] {
        for s in k..=last {
            col += 1;
            a.set(1, col, sum[s - 1] * dt);
            a.set(2, col, -sum[s - 1] * dt);
        }
        col += diff;
    }
    let b = if k == 1 {
        vec![e_adj_limit, e_adj_limit]
    } else {
        let mut hist = 0.0;
        for s in 1..k {
            hist += alpha_resi_sum[s - 1] * dc_resi[s - 1] + alpha_busi_sum[s - 1] * dc_busi[s - 1];
        }
        let hist = hist * dt;
        vec![e_adj_limit - hist, e_adj_limit + hist]
    };
    (a, b)
}

struct OracleCone {
    a: Dense,
    b: Vec<f64>,
    d: Vec<f64>,
    gamma: f64,
}

fn reference_cones(ld: &[Ld], kd: usize, n_batt: usize) -> Vec<OracleCone> {
    let n_br = ld.len();
    let idx_p = |e: usize| e;
    let idx_l = |e: usize| n_br + e;
    let idx_v = |j: usize| 2 * n_br + j;
    let mut boxes = Vec::new();
    for e in 1..=n_br {
        let (_, inbus, _, _) = ld[e - 1];
        let mut a = Dense::zeros(2, 3 * n_br);
        let mut b = [0.0; 2];
        let mut d = vec![0.0; 3 * n_br];
        let mut gamma = 0.0;
        a.set(1, idx_p(e), 2.0);
        if inbus == 1 {
            b[1] = -1.0;
            // Slack voltage is fixed at 1, so it moves into the constants.
            gamma = -1.0;
        } else {
            a.set(2, idx_v(inbus - 1), 1.0);
            d[idx_v(inbus - 1) - 1] = 1.0;
        }
        a.set(2, idx_l(e), -1.0);
        d[idx_l(e) - 1] = 1.0;
        boxes.push((a, b, d, gamma));
    }
    let offset = 2 * kd * (n_batt + 1);
    let width = offset + 3 * n_br * kd + 2 * kd;
    let mut out = Vec::new();
    for k in 1..=kd {
        for (a_box, b_box, d_box, g) in &boxes {
            let mut a = Dense::zeros(2, width);
            let mut d = vec![0.0; width];
            let c0 = offset + (k - 1) * 3 * n_br;
            for r in 1..=2 {
                for c in 1..=3 * n_br {
                    a.set(r, c0 + c, a_box.get(r, c));
                }
            }
            for c in 1..=3 * n_br {
                d[c0 + c - 1] = d_box[c - 1];
            }
            out.push(OracleCone {
                a,
                b: b_box.to_vec(),
                d,
                gamma: *g,
            });
        }
    }
    out
}

/// `alpha_*[node][step]` and `p_inj[bus][step]` are 1-based through the
/// closures below. The DR rows use the receiving bus of branch `e`, which is
/// the bus whose injection the row balances.
#[allow(clippy::too_many_arguments)]
fn reference_grid(
    kd: usize,
    ld: &[Ld],
    batt_bus: &[usize],
    resid_bus: &[usize],
    busi_bus: &[usize],
    alpha_resi: &[Vec<f64>],
    alpha_busi: &[Vec<f64>],
    p_inj: &[Vec<f64>],
) -> (Dense, Vec<f64>) {
    let n_br = ld.len();
    let n_batt = batt_bus.len();
    let idx_p = |e: usize| e;
    let idx_l = |e: usize| n_br + e;
    let idx_v = |j: usize| 2 * n_br + j;
    let mut a_eq = Dense::zeros(2 * n_br, 3 * n_br);
    let mut b_eq = vec![0.0; 2 * n_br];
    let offset = 2 * kd * n_batt + 2 * kd;
    let mut a_grid = Dense::zeros(0, 0);
    let mut b_grid = Vec::new();
    for k in 1..=kd {
        let mut a_dc = Dense::zeros(2 * n_br, 2 * kd);
        for e in 1..=n_br {
            let (_, inbus, outbus, r) = ld[e - 1];
            let p_row = 2 * e - 1;
            let v_row = 2 * e;
            a_eq.set(p_row, idx_p(e), 1.0);
            let children: Vec<usize> = (1..=n_br).filter(|&b| ld[b - 1].1 == outbus).collect();
            for c in children {
                a_eq.set(p_row, idx_p(c), -1.0);
            }
            a_eq.set(p_row, idx_l(e), -r);
            b_eq[p_row - 1] = -p_inj[outbus - 1][k - 1];

            a_eq.set(v_row, idx_v(outbus - 1), 1.0);
            if inbus == 1 {
                b_eq[v_row - 1] = 1.0;
            } else {
                a_eq.set(v_row, idx_v(inbus - 1), -1.0);
            }
            a_eq.set(v_row, idx_l(e), -r * r);
            a_eq.set(v_row, idx_p(e), 2.0 * r);

            if resid_bus.contains(&outbus) {
                for c in 1..=k {
                    a_dc.set(2 * e - 1, c, -alpha_resi[outbus - 1][c - 1]);
                }
            } else if busi_bus.contains(&outbus) {
                for c in 1..=k {
                    a_dc.set(2 * e - 1, kd + c, -alpha_busi[outbus - 1][c - 1]);
                }
            }
        }
        let width = offset + 3 * n_br * kd + 2 * kd;
        let mut ext = Dense::zeros(2 * n_br, width);
        let c0 = offset + (k - 1) * 3 * n_br;
        for r in 1..=2 * n_br {
            for c in 1..=3 * n_br {
                ext.set(r, c0 + c, a_eq.get(r, c));
            }
            for c in 1..=2 * kd {
                ext.set(r, offset + kd * 3 * n_br + c, a_dc.get(r, c));
            }
        }
        for bat_idx in 1..=n_batt {
            let ii = batt_bus[bat_idx - 1];
            let base = 2 * kd * (bat_idx - 1);
            let col_dis = base + k;
            let col_ch = base + kd + k;
            for b in (1..=n_br).filter(|&b| ld[b - 1].2 == ii) {
                ext.set(2 * b - 1, col_dis, 1.0);
                ext.set(2 * b - 1, col_ch, -1.0);
            }
        }
        a_grid.append_rows(&ext);
        b_grid.extend_from_slice(&b_eq);
    }
    (a_grid, b_grid)
}

fn assert_rows_equal(ours: &CsMat<f64>, row0: usize, oracle: &Dense, what: &str) {
    let dense = ours.to_dense();
    assert_eq!(oracle.cols, dense.ncols(), "{what}: column count");
    for r in 1..=oracle.rows {
        for c in 1..=oracle.cols {
            let a = dense[[row0 + r - 1, c - 1]];
            let b = oracle.get(r, c);
            assert!(a == b, "{what}: entry ({r}, {c}) is {a}, expected {b}");
        }
    }
}

struct Case {
    network: NetworkModel,
    batteries: Vec<BatteryParams>,
    residential: Vec<usize>,
    business: Vec<usize>,
}

fn ten_bus() -> Case {
    let (network, cfg) = builtin_case("10bus", 2024).unwrap();
    let kinds = |k: gridmpc::forecast::LoadType| -> Vec<usize> {
        cfg.loads.iter().filter(|l| l.kind == k).map(|l| l.bus).collect()
    };
    Case {
        batteries: cfg.battery_params(),
        residential: kinds(gridmpc::forecast::LoadType::Residential),
        business: kinds(gridmpc::forecast::LoadType::Business),
        network,
    }
}

/// Inputs for one decision step `k` (1-based) of a day of `kd` hourly steps.
struct StepInputs {
    soc: Vec<f64>,
    /// `[tp][bus_idx][n]` over the horizon.
    alpha: Vec<Vec<Vec<f64>>>,
    /// `[bus_idx][n]`.
    p_inj: Vec<Vec<f64>>,
    /// Day-indexed summed sensitivities per type.
    alpha_day_sum: Vec<Vec<f64>>,
    dc_hist: Vec<Vec<f64>>,
    epsilon: f64,
}

fn step_inputs(case: &Case, kd: usize, k: usize, seed: u64) -> StepInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bus = case.network.n_bus();
    let mut alpha_day = vec![vec![vec![0.0; kd]; n_bus]; 2];
    for (tp, buses) in [&case.residential, &case.business].into_iter().enumerate() {
        for &bus in buses {
            for a in alpha_day[tp][bus - 1].iter_mut() {
                *a = -rng.random_range(0.01..0.2);
            }
        }
    }
    // Horizon step n is day step k + n (1-based), wrapping past midnight.
    let day_step = |n: usize| (k - 1 + n) % kd;
    let alpha = alpha_day
        .iter()
        .map(|per_bus| {
            per_bus
                .iter()
                .map(|a| (0..kd).map(|n| a[day_step(n)]).collect())
                .collect()
        })
        .collect();
    let alpha_day_sum = alpha_day
        .iter()
        .map(|per_bus| (0..kd).map(|s| per_bus.iter().map(|a| a[s]).sum()).collect())
        .collect();
    let p_inj = (0..n_bus)
        .map(|b| {
            (0..kd)
                .map(|_| if b == 0 { 0.0 } else { rng.random_range(-0.05..0.03) })
                .collect()
        })
        .collect();
    let dc_hist = (0..2)
        .map(|_| (0..kd).map(|_| rng.random_range(-6e-4..6e-4)).collect())
        .collect();
    StepInputs {
        soc: case.batteries.iter().map(|_| rng.random_range(0.25..0.85)).collect(),
        alpha,
        p_inj,
        alpha_day_sum,
        dc_hist,
        epsilon: 0.0123,
    }
}

/// Compares every block at 1-based decision step `k` of an hourly day.
pub fn check_step(k: usize) {
    let kd = 24;
    let case = ten_bus();
    let inp = step_inputs(&case, kd, k, 77 + k as u64);
    let n_br = case.network.n_br();
    let n_batt = case.batteries.len();
    let s_base = case.network.bases.s_base_mva;
    let dt = 1.0;

    let history: f64 = (0..k - 1)
        .map(|s| (inp.alpha_day_sum[0][s] * inp.dc_hist[0][s] + inp.alpha_day_sum[1][s] * inp.dc_hist[1][s]) * dt)
        .sum();
    let horizon = Horizon::uniform((k - 1) as f64 * dt, dt, kd);
    let tariff = TariffSchedule::default();
    let input = ProblemInput {
        network: &case.network,
        batteries: &case.batteries,
        prices: horizon.start.iter().map(|&t| tariff.at(t % 24.0)).collect(),
        fixed_injection: (0..kd).map(|n| inp.p_inj.iter().map(|b| b[n]).collect()).collect(),
        soc: inp.soc.clone(),
        dr: Some(DrInput {
            alpha: inp.alpha.clone(),
            bound: vec![vec![1e-3; kd]; 2],
            epsilon: inp.epsilon,
            history,
        }),
        limits: NetworkLimits::default(),
        p_branch_max: 10.0,
        horizon,
    };
    let asm = assemble_program(&input, FlowModel::Socp).unwrap();
    let prog = &asm.program;
    let n_var = prog.n_vars();
    assert_eq!(n_var, kd * (2 * (1 + n_batt) + 3 * n_br + 2));

    // State-of-charge window
    let batts: Vec<OracleBattery> = case
        .batteries
        .iter()
        .zip(&inp.soc)
        .map(|(b, &s)| OracleBattery {
            e_max: b.e_max / s_base,
            eta_ch: b.eta_ch,
            eta_dis: b.eta_dis,
            sigma_max: b.sigma_max,
            sigma_min: b.sigma_min,
            sigma_k: s,
            sigma_0: b.sigma0,
        })
        .collect();
    let (a_soc, b_soc) = reference_soc(kd, n_var, &batts, dt, k);
    assert_rows_equal(&prog.ineq, 0, &a_soc, "A_SoC");
    assert_eq!(&prog.ineq_rhs[..b_soc.len()], &b_soc[..], "b_SoC");

    // Shifted-energy cap
    let (a_e, b_e) = reference_energy(
        kd,
        kd,
        n_br,
        n_batt,
        dt,
        k,
        &inp.alpha_day_sum[0],
        &inp.alpha_day_sum[1],
        inp.epsilon,
        &inp.dc_hist[0],
        &inp.dc_hist[1],
    );
    assert_rows_equal(&prog.ineq, a_soc.rows, &a_e, "A_dE");
    let r0 = b_soc.len();
    for i in 0..2 {
        assert!((prog.ineq_rhs[r0 + i] - b_e[i]).abs() <= 1e-15, "b_dE[{i}]");
    }
    assert_eq!(prog.ineq.rows(), a_soc.rows + 2);

    // Branch cones
    let ld: Vec<Ld> = case
        .network
        .branches
        .iter()
        .enumerate()
        .map(|(e, b)| (e + 1, b.from_bus, b.to_bus, b.r_pu))
        .collect();
    let cones = reference_cones(&ld, kd, n_batt);
    assert_eq!(prog.cones.len(), cones.len());
    for (i, (ours, want)) in prog.cones.iter().zip(&cones).enumerate() {
        assert_rows_equal(&ours.a, 0, &want.a, &format!("cone {i} A"));
        assert_eq!(ours.b, want.b, "cone {i} b");
        assert_eq!(ours.gamma, want.gamma, "cone {i} gamma");
        let d = ours.d.to_dense();
        for (c, &v) in want.d.iter().enumerate() {
            assert_eq!(d[c], v, "cone {i} d[{c}]");
        }
    }

    // Power balance and voltage drop
    let batt_bus: Vec<usize> = case.batteries.iter().map(|b| b.bus).collect();
    let (a_grid, b_grid) = reference_grid(
        kd,
        &ld,
        &batt_bus,
        &case.residential,
        &case.business,
        &inp.alpha[0],
        &inp.alpha[1],
        &inp.p_inj,
    );
    assert_eq!(asm.grid_rows, a_grid.rows);
    assert_rows_equal(&prog.eq, 0, &a_grid, "A_grid");
    assert_eq!(&prog.eq_rhs[..b_grid.len()], &b_grid[..], "b_grid");
}
