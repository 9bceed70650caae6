//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the verdict lines are always printed; exits non-zero if any criterion
//! fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::blocks::check_step;
use common::newton::newton_powerflow;
use common::oracles::DenseLp;
use gridmpc::assembler::{FlowModel, Horizon, DAY_HOURS};
use gridmpc::ems::{
    build_horizon_program, EmsMode, EmsOptions, PlantState, SecurityStatus, Simulation, SimulationTrace,
};
use gridmpc::experiments::{complexity_sweep, forecast_eval, run_scenario, RunReport, RunRequest, SweepRequest};
use gridmpc::forecast::{build_samples, fit_krr, msms_tune, MsmsConfig, ProfileDictionary};
use gridmpc::netmodel::{load_network, Bases, BranchRow, NetworkModel, WireLibrary};
use gridmpc::opf::solve_plant_powerflow;
use gridmpc::scenario::{builtin_config, parse_scenario, ScenarioConfig, DEFAULT_SEED};
use gridmpc::socp::{kkt_residuals, solve, ConeBlock, ConicProgram, SolveStatus, SolverOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = Box<dyn FnOnce(&mut Collected) -> Verdict>;

/// Traces produced along the way, checked by the invariant criterion.
#[derive(Default)]
struct Collected {
    traces: Vec<SimulationTrace>,
}

fn scenario(name: &str) -> ScenarioConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    parse_scenario(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn run_modes(config: ScenarioConfig, modes: &[EmsMode], dr: Option<bool>) -> (RunReport, Vec<SimulationTrace>) {
    let mut req = RunRequest::new(config, modes.to_vec());
    req.jobs = modes.len();
    req.options.dr_enabled = dr;
    run_scenario(&req).unwrap()
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s as f64 {
        Ok(())
    } else {
        Err(format!("took {:.0}s, limit {limit_s}s", elapsed.as_secs_f64()))
    }
}

fn tightness(out: &mut Collected) -> Verdict {
    let mut details = Vec::new();
    let mut failures = Vec::new();
    for case in ["10bus", "18bus", "33bus"] {
        let clock = Instant::now();
        let (report, traces) = run_modes(builtin_config(case, DEFAULT_SEED).unwrap(), &[EmsMode::SOCP_MPC], None);
        let elapsed = clock.elapsed();
        let t = report.results[0]
            .report
            .tightness
            .ok_or(format!("{case}: no relaxation gaps recorded"))?;
        details.push(format!(
            "{case} mean {:.2e}% max {:.2e}% ({:.0}s)",
            t.mean,
            t.max,
            elapsed.as_secs_f64()
        ));
        if t.mean > 5.0 || t.max > 10.0 {
            failures.push(format!("{case} gap mean {} max {}", t.mean, t.max));
        }
        if let Err(e) = within(elapsed, 300) {
            failures.push(format!("{case} {e}"));
        }
        out.traces.extend(traces);
    }
    let text = details.join(", ");
    if failures.is_empty() {
        Ok(text)
    } else {
        Err(format!("{}; {text}", failures.join("; ")))
    }
}

fn problem_sizes() -> Verdict {
    let mut details = Vec::new();
    let mut failures = Vec::new();
    for (case, socp_expected) in [("10bus", 840), ("18bus", 1464), ("33bus", 2592)] {
        let options = EmsOptions {
            forecasts: gridmpc::ems::ForecastSource::Perfect,
            ..EmsOptions::default()
        };
        let sim = Simulation::new(builtin_config(case, DEFAULT_SEED).unwrap(), &options).unwrap();
        let state = PlantState::initial(&sim);
        let size = |flow| {
            let horizon = Horizon::hybrid(0.0, sim.dt_d(), sim.dt_p(), DAY_HOURS);
            build_horizon_program(&sim, flow, 0.0, horizon, &state)
                .unwrap()
                .assembled
                .program
                .n_vars()
        };
        let (socp, lp) = (size(FlowModel::Socp), size(FlowModel::Lp));
        let n = sim.config.horizon.n_pre;
        let lp_formula = n * (2 * (1 + sim.batteries.len()) + sim.dr_types().len());
        let lp_expected = if case == "18bus" { 240 } else { lp_formula };
        details.push(format!("{case} SOCP {socp} LP {lp}"));
        if socp != socp_expected {
            failures.push(format!("{case} SOCP {socp} != {socp_expected}"));
        }
        if lp != lp_expected {
            failures.push(format!("{case} LP {lp} != {lp_expected}"));
        }
    }
    let text = details.join(", ");
    if failures.is_empty() {
        Ok(text)
    } else {
        Err(format!("{}; {text}", failures.join("; ")))
    }
}

fn complexity() -> Verdict {
    let clock = Instant::now();
    let req = SweepRequest {
        timing_strict: true,
        ..SweepRequest::default()
    };
    let report = complexity_sweep(&req).map_err(|e| e.to_string())?;
    let elapsed = clock.elapsed();
    let it = report.iteration_slope.ok_or("no iteration slope")?;
    let tt = report.iteration_time_slope.ok_or("no time slope")?;
    let text = format!(
        "iteration slope {it:.3} (band [0.15, 0.85]), time-per-iteration slope {tt:.3} (band [0.5, 1.5]), {:.0}s",
        elapsed.as_secs_f64()
    );
    within(elapsed, 900).map_err(|e| format!("{e}; {text}"))?;
    if (0.15..=0.85).contains(&it) && (0.5..=1.5).contains(&tt) {
        Ok(text)
    } else {
        Err(text)
    }
}

/// `min cᵀx s.t. ‖M(x − x0)‖ ≤ r`; the optimum is `cᵀx0 − r‖M⁻ᵀc‖`.
fn ellipsoid_program(rng: &mut ChaCha8Rng, n: usize) -> (ConicProgram, f64) {
    let m = DMatrix::from_fn(
        n,
        n,
        |i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3),
    );
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let r = rng.random_range(0.2..2.0);
    let w = m.transpose().lu().solve(&c).expect("well conditioned");
    let optimum = c.dot(&x0) - r * w.norm();
    let mut p = ConicProgram::new(n);
    p.cost = c.as_slice().to_vec();
    let trip: Vec<_> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, m[(i, j)]))
        .collect();
    let b = (&m * &x0).as_slice().to_vec();
    p.cones.push(ConeBlock::from_triplets(n, &trip, b, &[], -r));
    (p, optimum)
}

fn solver_oracle() -> Verdict {
    let clock = Instant::now();
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut cases: Vec<(String, ConicProgram, f64)> = Vec::new();
    for seed in 0..25u64 {
        let n = 2 + (seed % 3) as usize;
        let lp = DenseLp::random(1000 + seed, n, 4 + (seed % 4) as usize, (seed % 2) as usize);
        let reference = lp
            .vertex_optimum()
            .ok_or(format!("LP {seed}: oracle found no vertex"))?;
        cases.push((format!("LP {seed}"), lp.to_program(), reference));
    }
    for k in 0..25 {
        let n = 2 + k % 5;
        let (p, optimum) = ellipsoid_program(&mut rng, n);
        cases.push((format!("SOCP {k}"), p, optimum));
    }
    // Residuals are judged the way the solver's termination test states them:
    // feasibility relative to 1 + the largest data entry, complementarity as a
    // relative duality gap.
    let tol = opts.tolerances;
    let (mut worst_obj, mut worst_abs, mut worst_rel, mut worst_gap) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (name, p, reference) in &cases {
        let r = solve(p, &opts).map_err(|e| format!("{name}: {e}"))?;
        if r.status != SolveStatus::Optimal {
            return Err(format!("{name}: {:?}", r.status));
        }
        worst_obj = worst_obj.max((r.objective - reference).abs());
        let res = kkt_residuals(p, &r.u_star, &r.duals);
        let data = p
            .eq_rhs
            .iter()
            .chain(&p.ineq_rhs)
            .chain(p.cones.iter().flat_map(|c| c.b.iter().chain(std::iter::once(&c.gamma))))
            .chain(p.lower.iter().chain(&p.upper).filter(|v| v.is_finite()))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let cost = p.cost.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_abs = worst_abs.max(res.primal()).max(res.dual).max(res.dual_cone);
        worst_rel = worst_rel
            .max(res.primal() / (1.0 + data))
            .max(res.dual / (1.0 + cost))
            .max(res.dual_cone / (1.0 + cost));
        worst_gap = worst_gap.max(res.complementarity / r.objective.abs().max(1.0));
    }
    let elapsed = clock.elapsed();
    let text = format!(
        "{} programs, worst objective error {worst_obj:.1e}, worst scaled KKT residual {worst_rel:.1e} \
         (absolute {worst_abs:.1e}), worst relative complementarity {worst_gap:.1e}, {:.1}s",
        cases.len(),
        elapsed.as_secs_f64()
    );
    within(elapsed, 60).map_err(|e| format!("{e}; {text}"))?;
    if worst_obj <= 1e-3 && worst_rel <= tol.feas && worst_gap <= tol.gap {
        Ok(text)
    } else {
        Err(text)
    }
}

fn matrix_oracle() -> Verdict {
    for k in [1, 10, 24] {
        catch_unwind(|| check_step(k)).map_err(|e| format!("step {k}: {}", panic_text(e.as_ref())))?;
    }
    Ok("SoC, shifted-energy, cone and grid blocks identical at steps 1, 10 and 24".into())
}

fn chain(n: usize, wire: &str, len: f64) -> NetworkModel {
    let rows: Vec<_> = (1..n).map(|i| BranchRow::new(i, i + 1, wire, len)).collect();
    load_network(&rows, &WireLibrary::builtin(), Bases::default()).unwrap()
}

fn plant_oracle() -> Verdict {
    let mut worst_closed = 0.0f64;
    for load in [0.01, 0.05, 0.1, 0.2] {
        let mut net = chain(2, "AWG2", 100.0);
        let r = 0.05;
        net.branches[0].r_pu = r;
        let s = solve_plant_powerflow(&net, &[0.0, -load]).map_err(|e| e.to_string())?;
        let p = (1.0 - (1.0 - 4.0 * r * load).sqrt()) / (2.0 * r);
        let v = 1.0 - 2.0 * r * p + r * r * p * p;
        worst_closed = worst_closed.max((s.branch_p[0] - p).abs()).max((s.bus_v[0] - v).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut worst_newton = 0.0f64;
    for n in 3..=5 {
        for _ in 0..10 {
            let net = chain(n, "AWG2", rng.random_range(50.0..150.0));
            let mut inj: Vec<f64> = (0..n).map(|_| rng.random_range(-0.08..0.05)).collect();
            inj[0] = 0.0;
            let s = solve_plant_powerflow(&net, &inj).map_err(|e| e.to_string())?;
            let (p, l, v) = newton_powerflow(&net, &inj);
            for e in 0..n - 1 {
                worst_newton = worst_newton
                    .max((s.branch_p[e] - p[e]).abs())
                    .max((s.branch_l[e] - l[e]).abs())
                    .max((s.bus_v[e] - v[e]).abs());
            }
        }
    }
    let text = format!("closed-form 2-bus error {worst_closed:.1e}, Newton 3-5 bus error {worst_newton:.1e}");
    if worst_closed <= 1e-8 && worst_newton <= 1e-8 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn cost_orderings(out: &mut Collected) -> Verdict {
    let clock = Instant::now();
    let cost = |report: &RunReport, mode: EmsMode| {
        let r = report
            .results
            .iter()
            .find(|r| r.mode == mode.to_string())
            .expect("mode was run");
        r.report.economic_cost
    };
    let (with_dr, traces) = run_modes(scenario("cloudy_day.json"), &EmsMode::ALL, Some(true));
    out.traces.extend(traces);
    let (without_dr, traces) = run_modes(scenario("cloudy_day.json"), &EmsMode::ALL, Some(false));
    out.traces.extend(traces);
    let (stress, traces) = run_modes(scenario("stress_18bus.json"), &EmsMode::ALL, None);
    out.traces.extend(traces);
    let elapsed = clock.elapsed();

    let mut failures = Vec::new();
    for (report, tag) in [(&with_dr, "DR on"), (&without_dr, "DR off")] {
        if cost(report, EmsMode::SOCP_MPC) >= cost(report, EmsMode::SOCP_DAY_AHEAD) {
            failures.push(format!("{tag}: SOCP-MPC not cheaper than SOCP day-ahead"));
        }
        if cost(report, EmsMode::LP_MPC) >= cost(report, EmsMode::LP_DAY_AHEAD) {
            failures.push(format!("{tag}: LP-MPC not cheaper than LP day-ahead"));
        }
    }
    for mode in EmsMode::ALL {
        if cost(&with_dr, mode) > cost(&without_dr, mode) {
            failures.push(format!("{mode}: DR raised the cost"));
        }
    }
    let violations = |mode: EmsMode| {
        let r = stress
            .results
            .iter()
            .find(|r| r.mode == mode.to_string())
            .expect("mode was run");
        (r.report.violation_count, r.report.security_status)
    };
    for mode in EmsMode::ALL {
        let (count, status) = violations(mode);
        let lp = mode.flow == FlowModel::Lp;
        if lp && count == 0 {
            failures.push(format!("stress {mode}: no security violation"));
        }
        if !lp && (count > 0 || status != SecurityStatus::Satisfied) {
            failures.push(format!("stress {mode}: {count} violations"));
        }
    }
    if let Err(e) = within(elapsed, 600) {
        failures.push(e);
    }
    let summary = |r: &RunReport| {
        EmsMode::ALL
            .iter()
            .map(|&m| format!("{m} {:.2}", cost(r, m)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let text = format!(
        "DR on [{}], DR off [{}], stress violations [{}], {:.0}s",
        summary(&with_dr),
        summary(&without_dr),
        EmsMode::ALL
            .iter()
            .map(|&m| format!("{m} {}", violations(m).0))
            .collect::<Vec<_>>()
            .join(" "),
        elapsed.as_secs_f64()
    );
    if failures.is_empty() {
        Ok(text)
    } else {
        Err(format!("{}; {text}", failures.join("; ")))
    }
}

fn ems_invariants(collected: &Collected) -> Verdict {
    if collected.traces.is_empty() {
        return Err("no traces were produced".into());
    }
    let mut failures = Vec::new();
    for trace in &collected.traces {
        let tag = format!("{}/{}", trace.scenario, trace.mode);
        for (b, batt) in trace.batteries.iter().enumerate() {
            if trace
                .records
                .iter()
                .any(|r| r.soc[b] < batt.sigma_min - 1e-9 || r.soc[b] > batt.sigma_max + 1e-9)
            {
                failures.push(format!("{tag}: battery {b} left its SoC window"));
            }
            let last = trace.records.last().map_or(f64::NAN, |r| r.soc[b]);
            if last.is_nan() || last < batt.sigma0 - 1e-6 {
                failures.push(format!("{tag}: battery {b} ends at {last}"));
            }
        }
        for r in &trace.records {
            if r.shift_planned.abs() > trace.epsilon + 1e-9 {
                failures.push(format!("{tag}: shifted energy {} at step {}", r.shift_planned, r.step));
            }
            if let (Some(buy), Some(sell)) = (r.planned_buy, r.planned_sell) {
                if buy.min(sell) > 1e-6 {
                    failures.push(format!("{tag}: buys and sells at step {}", r.step));
                }
            }
        }
    }
    let text = format!("{} traces checked", collected.traces.len());
    if failures.is_empty() {
        Ok(text)
    } else {
        Err(format!("{}; {text}", failures.join("; ")))
    }
}

fn forecast_properties() -> Verdict {
    // Interpolation as the ridge vanishes, on a smooth series without repeated inputs.
    let spd = 24;
    let day: Vec<f64> = (0..spd)
        .map(|i| 0.5 + 0.4 * (i as f64 * 0.37).sin() + 0.05 * (i as f64 * 1.3).cos())
        .collect();
    let samples = build_samples(&[day], 3, spd);
    let mut interp_err = f64::INFINITY;
    for lambda in [1e-6, 1e-9, 1e-12] {
        let model = fit_krr(&samples, 0.3, lambda).map_err(|e| e.to_string())?;
        interp_err = samples
            .iter()
            .map(|s| (model.predict_increment(&s.window, s.t).unwrap() - s.delta).abs())
            .fold(0.0, f64::max);
    }

    // Dictionary anchoring when the realized day is one of the dictionary profiles.
    let config = builtin_config("10bus", DEFAULT_SEED).unwrap();
    let profiles = config.profiles().unwrap();
    let spd = profiles.steps_per_day;
    let dictionary = ProfileDictionary::bells(spd, config.forecast.dictionary_size);
    let starts: Vec<usize> = (0..spd - 1).collect();
    let (mut krr, mut dict) = (0.0, 0.0);
    for member in &dictionary.profiles {
        let report = forecast_eval(&profiles.history.solar, member, &dictionary, &config.forecast, &starts)
            .map_err(|e| e.to_string())?;
        let n = report.rows.len() as f64;
        krr += report.rows.iter().map(|r| r.nrmse_krr).sum::<f64>() / n;
        dict += report.rows.iter().map(|r| r.nrmse_dictionary).sum::<f64>() / n;
    }
    let members = dictionary.profiles.len() as f64;
    let (krr, dict) = (krr / members, dict / members);

    // Tuner determinism.
    let cfg = MsmsConfig::default();
    let first = msms_tune(&profiles.history.solar, 3, spd, &cfg).map_err(|e| e.to_string())?;
    let second = msms_tune(&profiles.history.solar, 3, spd, &cfg).map_err(|e| e.to_string())?;
    let deterministic = first.sigma.to_bits() == second.sigma.to_bits()
        && first.lambda.to_bits() == second.lambda.to_bits()
        && first.score.to_bits() == second.score.to_bits();

    let text = format!(
        "interpolation error {interp_err:.1e}, NRMSE over dictionary days: dictionary {dict:.4} vs KRR {krr:.4}, \
         tuner repeatable: {deterministic}"
    );
    if interp_err <= 1e-8 && dict < krr && deterministic {
        Ok(text)
    } else {
        Err(text)
    }
}

fn panic_text(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    // Free arguments select criteria by name substring, as with the default test harness.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut collected = Collected::default();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("relaxation tightness", Box::new(tightness)),
        ("problem-size identities", Box::new(|_| problem_sizes())),
        ("complexity scaling", Box::new(|_| complexity())),
        ("solver correctness", Box::new(|_| solver_oracle())),
        ("matrix-construction oracle", Box::new(|_| matrix_oracle())),
        ("plant oracle", Box::new(|_| plant_oracle())),
        ("cost orderings and stress security", Box::new(cost_orderings)),
        ("EMS invariants", Box::new(|c: &mut Collected| ems_invariants(c))),
        ("forecast properties", Box::new(|_| forecast_properties())),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let (mut ran, mut failed) = (0, 0);
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let verdict = catch_unwind(AssertUnwindSafe(|| check(&mut collected)))
            .unwrap_or_else(|e| Err(format!("panicked: {}", panic_text(e.as_ref()))));
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
