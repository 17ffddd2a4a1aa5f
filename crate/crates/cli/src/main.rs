//! `reflectsim`: command-line front end for reflect-core.
//!
//! Exit codes: 0 when the run completes and its check passes, 1 when a
//! check fails or a simulation breaks down, 2 on bad input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use reflect_core::cones::sweep_points;
use reflect_core::controlled::{simulate_controlled, Stop};
use reflect_core::convergence::{convergence_study, Metric, Rung, StudyConfig};
use reflect_core::geometry::Location;
use reflect_core::markov::{run_restart_test, BinSpec, RestartConfig, StoppingRule};
use reflect_core::parallel::{default_workers, map_paths};
use reflect_core::resolvent::{
    domain_grid, estimate_vgrid, estimate_vh, viscosity_subsolution_check, Estimator, ResolventRun,
    VGrid,
};
use reflect_core::scenario::{ScenarioConfig, BUILTIN_NAMES};
use reflect_core::sder::simulate_sder;
use reflect_core::testfn::TestFunction;
use reflect_core::timechange::time_change;
use reflect_core::Error;

#[derive(Parser)]
#[command(
    name = "reflectsim",
    version,
    about = "Obliquely reflected diffusions: checks, simulation, estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario JSON file, or the name of a built-in scenario.
    #[arg(long)]
    scenario: String,
    /// Worker threads (default: REFLECT_WORKERS, else available cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the cone conditions on sampled boundary points.
    Conecheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra boundary point to check, comma separated (repeatable).
        #[arg(long = "point", allow_hyphen_values = true)]
        points: Vec<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Simulate paths and write per-path summaries.
    Simulate(SimulateArgs),
    /// Estimate the resolvent `v_h(x0)`.
    Resolvent(ResolventArgs),
    /// Viscosity-subsolution diagnostic on a saved v-grid.
    Viscosity {
        #[command(flatten)]
        common: Common,
        /// v-grid written by `resolvent --grid-out`.
        #[arg(long)]
        grid: PathBuf,
        /// Smooth test function touching from above.
        #[arg(long)]
        f: String,
        /// The `h` the grid was estimated for.
        #[arg(long)]
        h: String,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Strong-Markov restart test.
    MarkovTest(MarkovArgs),
    /// Rerun a metric over a ladder of resolutions.
    Converge(ConvergeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Controlled,
    Sder,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Controlled,
    Constrained,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100)]
    paths: usize,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Interior-clock target (controlled mode) or time horizon (sder mode).
    #[arg(long)]
    lambda0_target: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Start point, comma separated (default: the scenario's x0).
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Controlled)]
    mode: Mode,
    /// Path representation written by `--dump`.
    #[arg(long, value_enum, default_value_t = Emit::Controlled)]
    emit: Emit,
    /// Output prefix: writes `<out>.csv` and, with `--dump`, `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    /// Write full paths as JSON.
    #[arg(long)]
    dump: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Controlled,
    Constrained,
    Both,
}

#[derive(Args)]
struct ResolventArgs {
    #[command(flatten)]
    common: Common,
    /// Test function: a number, inline JSON, or `@file.json`.
    #[arg(long)]
    h: String,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Both)]
    estimator: EstimatorArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    t_trunc: Option<f64>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also estimate on a lattice of this spacing (controlled clock).
    #[arg(long, requires = "grid_out")]
    grid_spacing: Option<f64>,
    #[arg(long)]
    grid_out: Option<PathBuf>,
}

#[derive(Args)]
struct MarkovArgs {
    #[command(flatten)]
    common: Common,
    /// `hit:<coordinate>:<level>` or `time:<t>`.
    #[arg(long)]
    rule: String,
    /// Comma-separated lags.
    #[arg(long, default_value = "0.1")]
    lags: String,
    #[arg(long, default_value_t = 2000)]
    paths: usize,
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    cells_per_axis: usize,
    #[arg(long, default_value_t = 50)]
    min_count: usize,
    #[arg(long)]
    x0: Option<String>,
    /// Start of a deliberately different fresh arm.
    #[arg(long)]
    control: Option<String>,
    #[arg(long)]
    calibrate: bool,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Excursion,
    Clock,
    Resolvent,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: Common,
    /// Rungs as `dt:delta`, comma separated, coarse first.
    #[arg(long)]
    ladder: String,
    #[arg(long, value_enum)]
    metric: MetricArg,
    /// Test function for the resolvent metric.
    #[arg(long)]
    h: Option<String>,
    /// Reference value for the resolvent metric.
    #[arg(long)]
    reference: Option<f64>,
    #[arg(long, default_value_t = 200)]
    paths: usize,
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

/// A failure together with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) | Error::Io(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = Result<bool, Failure>;

fn load_scenario(arg: &str) -> Result<ScenarioConfig, Failure> {
    if Path::new(arg).exists() {
        return Ok(ScenarioConfig::load(arg)?);
    }
    if BUILTIN_NAMES.contains(&arg) {
        return Ok(ScenarioConfig::builtin(arg)?);
    }
    Err(input_error(format!(
        "scenario {arg:?} is neither a file nor a built-in ({})",
        BUILTIN_NAMES.join(", ")
    )))
}

fn workers(common: &Common) -> usize {
    common.workers.unwrap_or_else(default_workers).max(1)
}

fn parse_point(text: &str, dim: usize) -> Result<Vec<f64>, Failure> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| input_error(format!("bad point {text:?}: {e}")))?;
    if v.len() != dim {
        return Err(input_error(format!(
            "point {text:?} needs {dim} coordinates"
        )));
    }
    Ok(v)
}

fn parse_list(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| input_error(format!("bad list {text:?}: {e}")))
}

fn parse_test_function(text: &str, dim: usize) -> Result<TestFunction, Failure> {
    let f = if let Ok(c) = text.trim().parse::<f64>() {
        TestFunction::constant(c)
    } else {
        let body = match text.strip_prefix('@') {
            Some(path) => {
                fs::read_to_string(path).map_err(|e| input_error(format!("{path}: {e}")))?
            }
            None => text.to_string(),
        };
        serde_json::from_str(&body).map_err(|e| input_error(format!("bad test function: {e}")))?
    };
    if !f.dim_ok(dim) {
        return Err(input_error(format!(
            "test function does not fit dimension {dim}"
        )));
    }
    Ok(f)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| input_error(e.to_string()))?;
    fs::write(path, text).map_err(|e| Failure::from(Error::from(e)))
}

fn with_overrides(
    mut s: ScenarioConfig,
    dt: Option<f64>,
    delta: Option<f64>,
) -> Result<ScenarioConfig, Failure> {
    if let Some(dt) = dt {
        s.numerics.dt = dt;
    }
    if let Some(delta) = delta {
        s.numerics.delta = delta;
    }
    s.validate()?;
    Ok(s)
}

fn conecheck(
    common: &Common,
    samples: usize,
    seed: Option<u64>,
    points: &[String],
    out: Option<&Path>,
) -> CmdResult {
    let s = load_scenario(&common.scenario)?;
    let seed = seed.unwrap_or(s.seed);
    let mut pts = s.domain.sample_boundary(samples, seed);
    for p in points {
        let x = parse_point(p, s.domain.dim)?;
        if !matches!(s.domain.classify(&x), Location::Boundary(_)) {
            return Err(input_error(format!("point {p:?} is not on the boundary")));
        }
        pts.push(x);
    }
    if pts.is_empty() {
        return Err(Error::BoundarySamplingFailed.into());
    }
    let sweep = sweep_points(&s.domain, &pts)?;
    for r in sweep.reports.iter().filter(|r| !r.holds()) {
        println!(
            "fails at {:?}: active {:?}, margin {:.4e}, beta {:.4e}",
            r.point, r.active, r.condition_b.margin, r.condition_c.beta
        );
    }
    println!(
        "{}: {} points, {} failures, min margin {:.6}, min beta {:.6}",
        s.name,
        sweep.reports.len(),
        sweep.failures,
        sweep.min_margin,
        sweep.min_beta
    );
    if let Some(path) = out {
        write_json(
            path,
            &json!({ "scenario": s.name, "scenario_hash": s.hash(), "seed": seed, "sweep": sweep }),
        )?;
    }
    Ok(sweep.all_hold)
}

fn simulate(a: &SimulateArgs) -> CmdResult {
    let s = with_overrides(load_scenario(&a.common.scenario)?, a.dt, a.delta)?;
    let k = s.kernel();
    let seed = a.seed.unwrap_or(s.seed);
    let x0 = match &a.x0 {
        Some(t) => parse_point(t, s.domain.dim)?,
        None => s.x0.clone(),
    };
    let target = a.lambda0_target.unwrap_or(s.numerics.lambda0_target);
    let n = a.paths;
    let w = workers(&a.common);
    let csv_path = a.out.with_extension("csv");
    let json_path = a.out.with_extension("json");
    let dim = s.domain.dim;
    let mut wtr = csv::Writer::from_path(&csv_path).map_err(|e| input_error(e.to_string()))?;
    let coord_names = (0..dim).map(|c| format!("x{c}"));
    let mut ok = true;
    match a.mode {
        Mode::Controlled => {
            let mut header: Vec<String> = [
                "path",
                "s",
                "lambda0",
                "lambda1",
                "atoms",
                "clock_residual",
                "max_exterior_depth",
            ]
            .map(String::from)
            .to_vec();
            header.extend(coord_names);
            wtr.write_record(&header)
                .map_err(|e| input_error(e.to_string()))?;
            let paths = map_paths(n, w, |i| {
                simulate_controlled(&k, &x0, Stop::Lambda0(target), seed, i)
            })?;
            let mut worst = 0.0_f64;
            for p in &paths {
                let depth = p
                    .records
                    .iter()
                    .map(|r| s.domain.exterior_depth(&r.y))
                    .fold(0.0, f64::max);
                worst = worst.max(p.clock_residual());
                let mut row = vec![
                    p.path_index.to_string(),
                    p.s.to_string(),
                    p.lambda0.to_string(),
                    p.lambda1.to_string(),
                    p.atoms.len().to_string(),
                    p.clock_residual().to_string(),
                    depth.to_string(),
                ];
                row.extend(p.terminal().iter().map(|v| v.to_string()));
                wtr.write_record(&row)
                    .map_err(|e| input_error(e.to_string()))?;
            }
            ok = worst <= s.numerics.clock_tolerance;
            println!("{n} controlled paths, max clock residual {worst:.3e}");
            if a.dump {
                match a.emit {
                    Emit::Controlled => write_json(&json_path, &paths)?,
                    Emit::Constrained => {
                        let cps = paths
                            .iter()
                            .map(|p| time_change(p, 0.0))
                            .collect::<Result<Vec<_>, _>>()?;
                        write_json(&json_path, &cps)?
                    }
                }
            }
        }
        Mode::Sder => {
            if a.emit == Emit::Constrained {
                return Err(input_error("--emit constrained needs --mode controlled"));
            }
            let mut header: Vec<String> = ["path", "horizon", "local_time", "atoms"]
                .map(String::from)
                .to_vec();
            header.extend(coord_names);
            wtr.write_record(&header)
                .map_err(|e| input_error(e.to_string()))?;
            let paths = map_paths(n, w, |i| simulate_sder(&k, &x0, target, seed, i))?;
            for p in &paths {
                let last = p.samples.last().expect("a path has samples");
                let mut row = vec![
                    p.path_index.to_string(),
                    last.t.to_string(),
                    p.local_time().to_string(),
                    p.atoms.len().to_string(),
                ];
                row.extend(last.x.iter().map(|v| v.to_string()));
                wtr.write_record(&row)
                    .map_err(|e| input_error(e.to_string()))?;
            }
            println!("{n} SDER paths to time {target}");
            if a.dump {
                write_json(&json_path, &paths)?;
            }
        }
    }
    wtr.flush().map_err(|e| Failure::from(Error::from(e)))?;
    Ok(ok)
}

fn resolvent(a: &ResolventArgs) -> CmdResult {
    let s = with_overrides(load_scenario(&a.common.scenario)?, a.dt, a.delta)?;
    let k = s.kernel();
    let h = parse_test_function(&a.h, s.domain.dim)?;
    let x0 = match &a.x0 {
        Some(t) => parse_point(t, s.domain.dim)?,
        None => s.x0.clone(),
    };
    let seed = a.seed.unwrap_or(s.seed);
    let run = ResolventRun {
        x0,
        n_paths: a.paths,
        t_trunc: a.t_trunc.unwrap_or(s.numerics.t_trunc),
        seed,
        workers: workers(&a.common),
        scenario_hash: Some(s.hash()),
    };
    let which: Vec<Estimator> = match a.estimator {
        EstimatorArg::Controlled => vec![Estimator::ControlledClock],
        EstimatorArg::Constrained => vec![Estimator::ConstrainedClock],
        EstimatorArg::Both => vec![Estimator::ControlledClock, Estimator::ConstrainedClock],
    };
    let mut estimates = Vec::new();
    for (i, e) in which.into_iter().enumerate() {
        // Independent streams for the two estimators.
        let r = ResolventRun {
            seed: seed.wrapping_add(i as u64 * 0x9E37_79B9),
            ..run.clone()
        };
        let est = estimate_vh(&k, &h, &r, e)?;
        println!(
            "{:?}: {:.6} ± {:.6} (n = {}, truncation bound {:.2e})",
            est.estimator, est.mean, est.stderr, est.n, est.truncation_bound
        );
        estimates.push(est);
    }
    let mut ok = true;
    let mut agreement = Value::Null;
    if let [c, d] = estimates.as_slice() {
        let combined = (c.stderr.powi(2) + d.stderr.powi(2)).sqrt();
        let gap = (c.mean - d.mean).abs();
        ok = gap <= 3.0 * combined + c.truncation_bound + d.truncation_bound;
        println!("agreement: |difference| = {gap:.6}, combined stderr {combined:.6}");
        agreement = json!({ "difference": gap, "combined_stderr": combined, "agree": ok });
    }
    if let Some(spacing) = a.grid_spacing {
        let points = domain_grid(&s.domain, spacing);
        if points.is_empty() {
            return Err(input_error("grid spacing leaves no points in the domain"));
        }
        let grid = estimate_vgrid(&k, &h, points, spacing, &run)?;
        let out = a.grid_out.as_ref().expect("clap enforces grid_out");
        grid.save(out)?;
        println!(
            "v-grid with {} points written to {}",
            grid.points.len(),
            out.display()
        );
    }
    if let Some(path) = &a.json {
        write_json(
            path,
            &json!({ "scenario": s.name, "h": h, "estimates": estimates, "agreement": agreement }),
        )?;
    }
    Ok(ok)
}

fn viscosity(
    common: &Common,
    grid: &Path,
    f: &str,
    h: &str,
    tol: f64,
    out: Option<&Path>,
) -> CmdResult {
    let s = load_scenario(&common.scenario)?;
    let grid = VGrid::load(grid)?;
    let f = parse_test_function(f, s.domain.dim)?;
    let h = parse_test_function(h, s.domain.dim)?;
    let r = viscosity_subsolution_check(&grid, &f, &h, &s.domain, &s.coefficients, tol)?;
    println!(
        "maximiser {:?} ({}), interior slack {:.4e}, boundary max {:?}: {}",
        r.point,
        if r.on_boundary {
            "boundary"
        } else {
            "interior"
        },
        r.interior_slack,
        r.boundary_max,
        if r.holds { "holds" } else { "violated" }
    );
    if let Some(path) = out {
        write_json(path, &r)?;
    }
    Ok(r.holds)
}

fn parse_rule(text: &str) -> Result<StoppingRule, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || {
        input_error(format!(
            "bad stopping rule {text:?}; use hit:<coord>:<level> or time:<t>"
        ))
    };
    match parts.as_slice() {
        ["hit", c, l] => Ok(StoppingRule::FirstHit {
            coordinate: c.parse().map_err(|_| bad())?,
            level: l.parse().map_err(|_| bad())?,
        }),
        ["time", t] => Ok(StoppingRule::FixedTime(t.parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

fn markov_test(a: &MarkovArgs) -> CmdResult {
    let s = load_scenario(&a.common.scenario)?;
    let k = s.kernel();
    let dim = s.domain.dim;
    let rule = parse_rule(&a.rule)?;
    if let StoppingRule::FirstHit { coordinate, .. } = rule {
        if coordinate >= dim {
            return Err(input_error("stopping coordinate out of range"));
        }
    }
    let cfg = RestartConfig {
        x0: match &a.x0 {
            Some(t) => parse_point(t, dim)?,
            None => s.x0.clone(),
        },
        rule,
        lags: parse_list(&a.lags)?,
        n_paths: a.paths,
        horizon: a.horizon,
        bins: BinSpec {
            cells_per_axis: a.cells_per_axis,
            cells: None,
            min_count: a.min_count,
        },
        seed: a.seed.unwrap_or(s.seed),
        workers: workers(&a.common),
        control_start: a
            .control
            .as_deref()
            .map(|t| parse_point(t, dim))
            .transpose()?,
        calibrate: a.calibrate,
    };
    let r = run_restart_test(&k, &cfg)?;
    let mut ok = r.passes(a.alpha);
    println!(
        "{}: {} stopped, {} comparisons, min p {:.4}",
        r.rule,
        r.stopped,
        r.entries.len(),
        r.min_p()
    );
    if let Some(p) = r.max_control_p() {
        let rejected = p < a.alpha;
        println!(
            "negative control: max p {p:.3e} ({})",
            if rejected { "rejected" } else { "NOT rejected" }
        );
        ok &= rejected;
    }
    if let Some(path) = &a.json {
        write_json(path, &r)?;
    }
    Ok(ok)
}

fn converge(a: &ConvergeArgs) -> CmdResult {
    let s = load_scenario(&a.common.scenario)?;
    let k = s.kernel();
    let ladder = a
        .ladder
        .split(',')
        .map(|r| {
            let (dt, delta) = r
                .split_once(':')
                .ok_or_else(|| input_error(format!("bad rung {r:?}; use dt:delta")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| input_error(format!("bad rung {r:?}: {e}")))
            };
            Ok(Rung {
                dt: parse(dt)?,
                delta: parse(delta)?,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    for r in &ladder {
        with_overrides(s.clone(), Some(r.dt), Some(r.delta))?;
    }
    let target = s.numerics.lambda0_target;
    let metric = match a.metric {
        MetricArg::Excursion => Metric::MaxExcursion {
            lambda0_target: target,
        },
        MetricArg::Clock => Metric::ClockResidual {
            lambda0_target: target,
        },
        MetricArg::Resolvent => Metric::ResolventError {
            h: parse_test_function(
                a.h.as_deref()
                    .ok_or_else(|| input_error("--metric resolvent needs --h"))?,
                s.domain.dim,
            )?,
            reference: a
                .reference
                .ok_or_else(|| input_error("--metric resolvent needs --reference"))?,
            t_trunc: s.numerics.t_trunc,
        },
    };
    let x0 = match &a.x0 {
        Some(t) => parse_point(t, s.domain.dim)?,
        None => s.x0.clone(),
    };
    let cfg = StudyConfig {
        x0: &x0,
        n_paths: a.paths,
        seed: a.seed.unwrap_or(s.seed),
        workers: workers(&a.common),
        slack: a.slack,
    };
    let table = convergence_study(&k, &ladder, &metric, &cfg)?;
    println!(
        "{:>12} {:>12} {:>14} {:>12}",
        "dt", "delta", "value", "stderr"
    );
    for r in &table.rows {
        let se = r
            .stderr
            .map(|v| format!("{v:.4e}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:>12.3e} {:>12.3e} {:>14.6e} {:>12}",
            r.dt, r.delta, r.value, se
        );
    }
    println!("non-increasing: {}", table.non_increasing);
    if let Some(path) = &a.json {
        write_json(
            path,
            &json!({ "scenario": s.name, "metric": metric, "table": table }),
        )?;
    }
    Ok(table.non_increasing)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Conecheck {
            common,
            samples,
            seed,
            points,
            json,
        } => conecheck(common, *samples, *seed, points, json.as_deref()),
        Command::Simulate(a) => simulate(a),
        Command::Resolvent(a) => resolvent(a),
        Command::Viscosity {
            common,
            grid,
            f,
            h,
            tol,
            json,
        } => viscosity(common, grid, f, h, *tol, json.as_deref()),
        Command::MarkovTest(a) => markov_test(a),
        Command::Converge(a) => converge(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            println!("check failed");
            ExitCode::from(1)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
