//! Command-line front end: scenario runs, the complexity sweep, forecast
//! evaluation and configuration linting.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use serde::Serialize;
use serde_json::Value;

use gridmpc::ems::EmsMode;
use gridmpc::experiments::{complexity_sweep, forecast_eval, run_scenario, ExperimentError, RunRequest, SweepRequest};
use gridmpc::scenario::{builtin_config, parse_scenario, ScenarioConfig, ScenarioError, DEFAULT_SEED};

const RUN_SCHEMA: &str = include_str!("../schema/run_report.schema.json");
const COMPLEXITY_SCHEMA: &str = include_str!("../schema/complexity_report.schema.json");
const FORECAST_SCHEMA: &str = include_str!("../schema/forecast_eval.schema.json");

const EXIT_SOLVER: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_INTERNAL: u8 = 1;

#[derive(Parser)]
#[command(
    name = "gridmpc",
    version,
    about = "Model-predictive energy management for radial microgrids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one day under the requested EMS modes.
    Run(RunArgs),
    /// SOCP-MPC solver scaling over feeders and horizon lengths.
    ComplexitySweep(SweepArgs),
    /// Multi-step solar forecast accuracy from several start times.
    ForecastEval(ForecastArgs),
    /// Check a scenario without running it.
    Validate(SourceArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Built-in feeder: 10bus, 18bus, 33bus or 18bus-stress.
    #[arg(long, conflicts_with = "scenario")]
    builtin: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Comma-separated modes or `all`.
    #[arg(long, default_value = "all")]
    modes: String,
    /// Decision step, e.g. `1h`, `5min`, `0.25` (hours).
    #[arg(long)]
    dt_d: Option<String>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Modes simulated concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = ["10bus".to_string(), "18bus".to_string(), "33bus".to_string()])]
    cases: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [6usize, 12, 24])]
    horizons: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Sweep cells run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Run cells serially so timings do not contend.
    #[arg(long)]
    timing_strict: bool,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Start steps on the prediction grid; defaults to every other step.
    #[arg(long, value_delimiter = ',')]
    starts: Vec<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Solver(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Solver(_) => EXIT_SOLVER,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else if matches!(e, ExperimentError::Io(_)) {
            Failure::Internal(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Internal(format!("{}: {e}", path.display()))
}

/// Accepts `5min`, `5m`, `1h`, `0.5h` or a bare number of hours.
fn parse_duration_h(text: &str) -> Result<f64, Failure> {
    let t = text.trim().to_ascii_lowercase();
    let (num, scale) = if let Some(v) = t.strip_suffix("min") {
        (v, 1.0 / 60.0)
    } else if let Some(v) = t.strip_suffix('m') {
        (v, 1.0 / 60.0)
    } else if let Some(v) = t.strip_suffix('h') {
        (v, 1.0)
    } else {
        (t.as_str(), 1.0)
    };
    match num.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v * scale),
        _ => Err(Failure::Config(format!("invalid duration `{text}`"))),
    }
}

fn load_config(source: &SourceArgs) -> Result<ScenarioConfig, Failure> {
    match (&source.builtin, &source.scenario) {
        (Some(name), None) => Ok(builtin_config(name, source.seed.unwrap_or(DEFAULT_SEED))?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let text = match source.seed {
                Some(seed) => {
                    let mut doc: Value =
                        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                    if let Some(obj) = doc.as_object_mut() {
                        obj.insert("rng_seed".into(), seed.into());
                    }
                    doc.to_string()
                }
                None => text,
            };
            Ok(parse_scenario(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?)
        }
        _ => Err(Failure::Config("give exactly one of --builtin or --scenario".into())),
    }
}

/// Serializes `value`, checks it against `schema` and writes it to `path`.
fn write_report<T: Serialize>(value: &T, schema: &str, path: &Path) -> Result<(), Failure> {
    let doc = serde_json::to_value(value).map_err(|e| Failure::Internal(e.to_string()))?;
    let schema: Value = serde_json::from_str(schema).map_err(|e| Failure::Internal(format!("schema: {e}")))?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| Failure::Internal(format!("schema: {e}")))?;
    let problems: Vec<String> = validator
        .iter_errors(&doc)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    if !problems.is_empty() {
        return Err(Failure::Internal(format!(
            "report does not match its schema: {}",
            problems.join("; ")
        )));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Internal(e.to_string()))?;
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.source)?;
    if let Some(dt) = &args.dt_d {
        config.horizon.dt_d_h = parse_duration_h(dt)?;
    }
    let modes = EmsMode::parse_list(&args.modes).map_err(|e| Failure::Config(e.to_string()))?;
    let mut req = RunRequest::new(config, modes);
    req.out = Some(args.out.clone());
    req.jobs = args.jobs;
    let (report, _) = run_scenario(&req)?;
    let path = args.out.join("report.json");
    write_report(&report, RUN_SCHEMA, &path)?;
    for r in &report.results {
        let c = &r.report;
        let gap = c
            .tightness
            .map(|t| format!(", gap {:.3}% ± {:.3}%", t.mean, t.std))
            .unwrap_or_default();
        println!(
            "{:<15} cost ${:.2}, DR user cost ${:.2}, security {:?} ({} violations), {} fallbacks{gap}",
            r.mode, c.economic_cost, c.dr_user_cost, c.security_status, c.violation_count, c.fallback_steps
        );
    }
    println!("report: {}", path.display());
    if report.solver_failures > 0 {
        return Err(Failure::Solver(format!(
            "{} decision steps fell back after a failed solve",
            report.solver_failures
        )));
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let req = SweepRequest {
        cases: args.cases,
        horizons: args.horizons,
        seed: args.seed,
        jobs: args.jobs,
        timing_strict: args.timing_strict,
        ..Default::default()
    };
    let report = complexity_sweep(&req)?;
    write_report(&report, COMPLEXITY_SCHEMA, &args.out.join("complexity.json"))?;
    let mut csv = String::from("case,n_pre,n_br,n_vars,median_iterations,median_iteration_time_s,fallback_steps\n");
    for c in &report.cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{:.6e},{}\n",
            c.case, c.n_pre, c.n_br, c.n_vars, c.median_iterations, c.median_iteration_time, c.fallback_steps
        ));
    }
    let csv_path = args.out.join("complexity.csv");
    fs::write(&csv_path, &csv).map_err(|e| io_failure(&csv_path, e))?;
    print!("{csv}");
    let fmt = |s: Option<f64>| s.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!(
        "slope of iterations: {}, slope of time per iteration: {}",
        fmt(report.iteration_slope),
        fmt(report.iteration_time_slope)
    );
    Ok(())
}

fn forecast(args: ForecastArgs) -> Result<(), Failure> {
    let config = load_config(&args.source)?;
    let profiles = config.profiles()?;
    let spd = profiles.steps_per_day;
    let realized = profiles
        .pv
        .first()
        .ok_or_else(|| Failure::Config("scenario has no PV source to evaluate".into()))?;
    let starts = if args.starts.is_empty() {
        (0..spd).step_by(2).collect()
    } else {
        args.starts
    };
    let dictionary = gridmpc::forecast::ProfileDictionary::bells(spd, config.forecast.dictionary_size);
    let report = forecast_eval(
        &profiles.history.solar,
        realized,
        &dictionary,
        &config.forecast,
        &starts,
    )?;
    write_report(&report, FORECAST_SCHEMA, &args.out.join("forecast_eval.json"))?;
    let csv_path = args.out.join("forecast_trajectories.csv");
    fs::write(&csv_path, report.trajectories_csv()).map_err(|e| io_failure(&csv_path, e))?;
    println!("start_h  krr      dictionary  persistence");
    for r in &report.rows {
        println!(
            "{:6.2}  {:.5}  {:.5}     {:.5}",
            r.start_h, r.nrmse_krr, r.nrmse_dictionary, r.nrmse_persistence
        );
    }
    Ok(())
}

fn validate(args: SourceArgs) -> Result<(), Failure> {
    let config = load_config(&args)?;
    let network = config.network()?;
    config.validate(&network)?;
    config.horizon.validate()?;
    println!(
        "{}: {} buses, {} branches, {} batteries, {} PV, {} loads: ok",
        config.name,
        network.buses.len(),
        network.branches.len(),
        config.batteries.len(),
        config.pv.len(),
        config.loads.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EMS_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::ComplexitySweep(a) => sweep(a),
        Command::ForecastEval(a) => forecast(a),
        Command::Validate(a) => validate(a),
    };
    match outcome {
        Ok(()) => {
            info!("done");
            ExitCode::SUCCESS
        }
        Err(f) => {
            error!("{}", f.message());
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
