//! The four subcommands: `run`, `plot`, `sweep`, `certify`.
//!
//! Exit-code convention (encoded in [`CliError`]): 0 = all enabled
//! certificates pass, 1 = a certificate or aggregate check failed,
//! 2 = configuration/input could not be parsed or validated,
//! 3 = the simulation itself failed.

use crate::artifacts::{
    line_chart, read_trajectory_csv, write_matrix_dump, write_snapshot, write_trajectory_csv,
    Series,
};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use wentzell::config::{NonlinearitySpec, SweepParameter};
use wentzell::diagnostics::{
    operator_certificates, trajectory_certificates, CertificateReport, TrajectoryExpectations,
};
use wentzell::evolution::{forced_evolve, maximal_solve, Trajectory, TrajectoryStatus};
use wentzell::geometry::weights_at;
use wentzell::manufactured::{ManufacturedSolution, OrderStudy};
use wentzell::operators::assemble_wentzell_operator;
use wentzell::tolerances::{CONVERGENCE_ORDER, CONVERGENCE_ORDER_TOL};
use wentzell::{Grid, Kappa, Metric, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparseable, or schema-invalid input (exit 2).
    Config(String),
    /// Certificates or aggregate checks failed; artifacts were written
    /// (exit 1).
    Certificate(String),
    /// The simulation could not produce a complete trajectory (exit 3).
    Simulation(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Certificate(m) => write!(f, "certificate failure: {m}"),
            CliError::Simulation(m) => write!(f, "simulation: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Certificate(_) => 1,
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
        }
    }
}

fn io_err(context: &str, e: std::io::Error) -> CliError {
    CliError::Simulation(format!("{context}: {e}"))
}

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn resolve_out(flag: Option<PathBuf>, cfg: &RunConfig, fallback: &str) -> PathBuf {
    flag.or_else(|| cfg.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn print_report(report: &CertificateReport, quiet: bool) {
    if quiet {
        return;
    }
    for c in &report.checks {
        println!(
            "[{}] {}: {:.3e} <= {:.3e}  ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.property,
            c.measured,
            c.tolerance,
            c.detail
        );
    }
}

/// Expectations derivable from a configuration: a frozen metric with no
/// reaction term makes the heat norm monotone and the Schrödinger norm
/// conserved; every run checks its blow-up bracket when one is reported.
fn expectations_for(cfg: &RunConfig, term_is_none: bool) -> TrajectoryExpectations {
    let frozen_linear = cfg.metric.is_static() && term_is_none;
    TrajectoryExpectations {
        monotone_norm: frozen_linear && cfg.equation == Kappa::Heat,
        conserved_norm: frozen_linear && cfg.equation == Kappa::Schrodinger,
        blowup_threshold: Some(cfg.solver.blowup_threshold),
    }
}

/// Simulates one configuration, writes `trajectory.csv`,
/// `final_state.json`, and `report.json` into the output directory, and
/// fails per the exit-code convention.
pub fn cmd_run(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    let out_dir = resolve_out(out, &cfg, "wentzell-out");
    fs::create_dir_all(&out_dir).map_err(|e| io_err("creating output directory", e))?;

    let grid = cfg.build_grid().map_err(|e| CliError::Config(e.to_string()))?;
    let term = cfg.build_nonlinearity().map_err(|e| CliError::Config(e.to_string()))?;
    let x0 = cfg.build_initial(&grid).map_err(|e| CliError::Config(e.to_string()))?;

    let traj = maximal_solve(&grid, &cfg.metric, cfg.equation, &term, &x0, &cfg.solver)
        .map_err(|e| CliError::Simulation(e.to_string()))?;

    write_trajectory_csv(&out_dir.join("trajectory.csv"), &traj)
        .map_err(|e| io_err("writing trajectory.csv", e))?;
    write_snapshot(&out_dir.join("final_state.json"), &traj, &grid)
        .map_err(|e| io_err("writing final_state.json", e))?;

    let report = trajectory_certificates(&traj, expectations_for(&cfg, term.is_none()), cfg.seed);
    fs::write(out_dir.join("report.json"), report.to_json())
        .map_err(|e| io_err("writing report.json", e))?;

    print_report(&report, quiet);
    if !quiet {
        println!(
            "status: {:?}; {} samples; artifacts in {}",
            traj.status,
            traj.len(),
            out_dir.display()
        );
    }
    if let TrajectoryStatus::Failed { reason } = &traj.status {
        return Err(CliError::Simulation(reason.clone()));
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.property.as_str())
            .collect();
        Err(CliError::Certificate(format!(
            "{} of {} checks failed ({}); see {}",
            failed.len(),
            report.checks.len(),
            failed.join(", "),
            out_dir.join("report.json").display()
        )))
    }
}

/// Renders norm-versus-time and graph-norm-versus-time figures from a
/// trajectory CSV.
pub fn cmd_plot(csv: &Path, out: Option<PathBuf>, quiet: bool) -> Result<(), CliError> {
    let table = read_trajectory_csv(csv).map_err(CliError::Config)?;
    let out_dir = out
        .or_else(|| csv.parent().map(|p| p.to_path_buf()))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| io_err("creating output directory", e))?;

    let pair = |ys: &[f64]| -> Vec<(f64, f64)> {
        table.t.iter().copied().zip(ys.iter().copied()).collect()
    };
    let (ref_pts, inst_pts, graph_pts) =
        (pair(&table.norm_ref), pair(&table.norm_inst), pair(&table.graph_norm));

    let norms = out_dir.join("norms.svg");
    line_chart(
        &norms,
        "State norm along the run",
        "t",
        "‖X(t)‖",
        &[
            Series { label: "reference metric", color: "#1f77b4", points: &ref_pts },
            Series { label: "instantaneous metric", color: "#d62728", points: &inst_pts },
        ],
    )
    .map_err(|e| io_err("writing norms.svg", e))?;

    let graph = out_dir.join("graph_norm.svg");
    line_chart(
        &graph,
        "Graph seminorm along the run",
        "t",
        "‖A(t)X(t)‖",
        &[Series { label: "graph seminorm", color: "#2ca02c", points: &graph_pts }],
    )
    .map_err(|e| io_err("writing graph_norm.svg", e))?;

    if !quiet {
        println!("wrote {} and {}", norms.display(), graph.display());
    }
    Ok(())
}

/// Structural operator certificates on the configured grid and metric at
/// t ∈ {0, T/2, T}; optionally dumps the stiffness matrix in coordinate
/// text format.
pub fn cmd_certify(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
    dump_matrix: bool,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    let out_dir = resolve_out(out, &cfg, "wentzell-certify");
    fs::create_dir_all(&out_dir).map_err(|e| io_err("creating output directory", e))?;
    let grid = cfg.build_grid().map_err(|e| CliError::Config(e.to_string()))?;

    let t_final = cfg.solver.t_final.max(0.0);
    let times =
        if t_final > 0.0 { vec![0.0, 0.5 * t_final, t_final] } else { vec![0.0] };
    let report = operator_certificates(&grid, &cfg.metric, &times, 25, cfg.seed)
        .map_err(|e| CliError::Simulation(e.to_string()))?;
    fs::write(out_dir.join("report.json"), report.to_json())
        .map_err(|e| io_err("writing report.json", e))?;

    if dump_matrix {
        let op = assemble_wentzell_operator(0.0, &grid, &cfg.metric)
            .map_err(|e| CliError::Simulation(e.to_string()))?;
        write_matrix_dump(&out_dir.join("stiffness_t0.coo"), &op.stiffness)
            .map_err(|e| io_err("writing stiffness_t0.coo", e))?;
    }

    print_report(&report, quiet);
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Certificate(format!(
            "see {}",
            out_dir.join("report.json").display()
        )))
    }
}

#[derive(Serialize)]
struct PointOutcome {
    value: f64,
    seed: u64,
    dir: String,
    passed: bool,
    status: String,
    detail: String,
}

#[derive(Serialize)]
struct SweepReport {
    parameter: String,
    values: Vec<f64>,
    passed: bool,
    points: Vec<PointOutcome>,
    /// Human-readable descriptions of every failed point.
    failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pair_orders: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolutions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measurements: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order_tolerance: Option<f64>,
}

struct PointResult {
    outcome: PointOutcome,
    /// Error proxy for order fits (step-size and grid sweeps).
    measurement: Option<f64>,
    /// Final state of a manufactured run (step-size sweeps difference
    /// consecutive finals).
    final_state: Option<wentzell::StateVector>,
}

/// One manufactured forced run; returns the completed trajectory.
fn manufactured_run(
    grid: &Grid,
    metric: &Metric,
    kappa: Kappa,
    dt: f64,
    t_final: f64,
) -> Result<Trajectory, String> {
    let ms = ManufacturedSolution::new(metric, kappa);
    let x0 = ms.state(grid, 0.0);
    let traj = forced_evolve(grid, metric, kappa, &x0, (0.0, t_final), dt, |t| {
        ms.forcing_state(grid, t).expect("validated metric stays positive")
    })
    .map_err(|e| e.to_string())?;
    match &traj.status {
        TrajectoryStatus::Completed => Ok(traj),
        other => Err(format!("run did not complete: {other:?}")),
    }
}

/// Runs every sweep point concurrently (each in its own `point_NNN`
/// directory with an independently derived seed), aggregates trajectory
/// certificates, and fits convergence orders for step-size and grid sweeps.
pub fn cmd_sweep(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let cfg = load_config(config, seed)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("the configuration has no sweep section".into()))?;
    if matches!(sweep.parameter, SweepParameter::Dt | SweepParameter::Grid)
        && sweep.values.len() < 3
    {
        return Err(CliError::Config(
            "an order-fitting sweep needs at least three values".into(),
        ));
    }
    let out_dir = resolve_out(out, &cfg, "wentzell-sweep");
    fs::create_dir_all(&out_dir).map_err(|e| io_err("creating output directory", e))?;

    let grid = cfg.build_grid().map_err(|e| CliError::Config(e.to_string()))?;
    let t_final = cfg.solver.t_final;

    // Descending step sizes / ascending resolutions keep the fitted orders'
    // sign conventions; points are independent so sorting is free.
    let mut values = sweep.values.clone();
    match sweep.parameter {
        SweepParameter::Dt => values.sort_by(|a, b| b.partial_cmp(a).unwrap()),
        SweepParameter::Grid => values.sort_by(|a, b| a.partial_cmp(b).unwrap()),
        _ => {}
    }

    let run_point = |(idx, &value): (usize, &f64)| -> PointResult {
        let point_seed = cfg.seed.wrapping_add(idx as u64);
        let dir = out_dir.join(format!("point_{idx:03}"));
        let dir_name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut outcome = PointOutcome {
            value,
            seed: point_seed,
            dir: dir_name,
            passed: false,
            status: String::new(),
            detail: String::new(),
        };
        if let Err(e) = fs::create_dir_all(&dir) {
            outcome.status = "failed".into();
            outcome.detail = format!("creating {}: {e}", dir.display());
            return PointResult { outcome, measurement: None, final_state: None };
        }

        match sweep.parameter {
            SweepParameter::Dt => {
                match manufactured_run(&grid, &cfg.metric, cfg.equation, value, t_final) {
                    Ok(traj) => {
                        let csv_ok = write_trajectory_csv(&dir.join("trajectory.csv"), &traj);
                        outcome.passed = csv_ok.is_ok();
                        outcome.status = "completed".into();
                        outcome.detail = format!("manufactured forced run at dt = {value}");
                        if let Err(e) = csv_ok {
                            outcome.status = "failed".into();
                            outcome.detail = format!("writing trajectory.csv: {e}");
                        }
                        let fin = traj.last_state().cloned();
                        PointResult { outcome, measurement: None, final_state: fin }
                    }
                    Err(e) => {
                        outcome.status = "failed".into();
                        outcome.detail = e;
                        PointResult { outcome, measurement: None, final_state: None }
                    }
                }
            }
            SweepParameter::Grid => {
                let n = value as usize;
                let point_grid = match Grid::build(n, n) {
                    Ok(g) => g,
                    Err(e) => {
                        outcome.status = "failed".into();
                        outcome.detail = e.to_string();
                        return PointResult { outcome, measurement: None, final_state: None };
                    }
                };
                match manufactured_run(
                    &point_grid,
                    &cfg.metric,
                    cfg.equation,
                    cfg.solver.dt,
                    t_final,
                ) {
                    Ok(traj) => {
                        let _ = write_trajectory_csv(&dir.join("trajectory.csv"), &traj);
                        let ms = ManufacturedSolution::new(&cfg.metric, cfg.equation);
                        let exact = ms.state(&point_grid, t_final);
                        let w = weights_at(t_final, &point_grid, &cfg.metric)
                            .expect("validated metric stays positive");
                        let err = traj.last_state().unwrap().sub(&exact).norm_u(&w)
                            / exact.norm_u(&w);
                        outcome.passed = true;
                        outcome.status = "completed".into();
                        outcome.detail =
                            format!("relative error {err:.3e} against the exact field");
                        PointResult { outcome, measurement: Some(err), final_state: None }
                    }
                    Err(e) => {
                        outcome.status = "failed".into();
                        outcome.detail = e;
                        PointResult { outcome, measurement: None, final_state: None }
                    }
                }
            }
            SweepParameter::Alpha | SweepParameter::Amplitude => {
                let mut point_cfg = cfg.clone();
                point_cfg.seed = point_seed;
                match sweep.parameter {
                    SweepParameter::Alpha => {
                        if let NonlinearitySpec::Power { alpha, .. } =
                            &mut point_cfg.nonlinearity
                        {
                            *alpha = value;
                        }
                    }
                    _ => {
                        let omega = match cfg.metric {
                            Metric::Breathing { omega, .. } => omega,
                            _ => std::f64::consts::TAU,
                        };
                        point_cfg.metric = Metric::Breathing { amplitude: value, omega };
                    }
                }
                let built = point_cfg
                    .validate()
                    .and_then(|()| Ok((point_cfg.build_nonlinearity()?, point_cfg.build_initial(&grid)?)));
                let (term, x0) = match built {
                    Ok(pair) => pair,
                    Err(e) => {
                        outcome.status = "failed".into();
                        outcome.detail = e.to_string();
                        return PointResult { outcome, measurement: None, final_state: None };
                    }
                };
                match maximal_solve(
                    &grid,
                    &point_cfg.metric,
                    point_cfg.equation,
                    &term,
                    &x0,
                    &point_cfg.solver,
                ) {
                    Ok(traj) => {
                        let _ = write_trajectory_csv(&dir.join("trajectory.csv"), &traj);
                        let report = trajectory_certificates(
                            &traj,
                            expectations_for(&point_cfg, term.is_none()),
                            point_seed,
                        );
                        let _ = fs::write(dir.join("report.json"), report.to_json());
                        let failed_sim =
                            matches!(traj.status, TrajectoryStatus::Failed { .. });
                        outcome.passed = report.passed && !failed_sim;
                        outcome.status = format!("{:?}", traj.status);
                        outcome.detail = format!(
                            "{} certificate checks, {} passed",
                            report.checks.len(),
                            report.checks.iter().filter(|c| c.passed).count()
                        );
                        PointResult { outcome, measurement: None, final_state: None }
                    }
                    Err(e) => {
                        outcome.status = "failed".into();
                        outcome.detail = e.to_string();
                        PointResult { outcome, measurement: None, final_state: None }
                    }
                }
            }
        }
    };

    let results: Vec<PointResult> =
        values.iter().enumerate().collect::<Vec<_>>().into_par_iter().map(run_point).collect();

    // Aggregate: order fits for dt/grid, certificate conjunction otherwise.
    let mut report = SweepReport {
        parameter: format!("{:?}", sweep.parameter).to_lowercase(),
        values: values.clone(),
        passed: true,
        points: Vec::new(),
        failures: Vec::new(),
        order: None,
        pair_orders: None,
        resolutions: None,
        measurements: None,
        order_target: None,
        order_tolerance: None,
    };
    let mut finals = Vec::new();
    let mut measurements = Vec::new();
    for r in results {
        if !r.outcome.passed {
            report.passed = false;
            report
                .failures
                .push(format!("{} (value {}): {}", r.outcome.dir, r.outcome.value, r.outcome.detail));
        }
        if let Some(f) = r.final_state {
            finals.push(f);
        }
        if let Some(m) = r.measurement {
            measurements.push(m);
        }
        report.points.push(r.outcome);
    }

    let study: Option<OrderStudy> = match sweep.parameter {
        SweepParameter::Dt if finals.len() == values.len() => {
            let w = weights_at(t_final, &grid, &cfg.metric)
                .map_err(|e| CliError::Simulation(e.to_string()))?;
            let diffs: Vec<f64> =
                finals.windows(2).map(|p| p[0].sub(&p[1]).norm_u(&w)).collect();
            Some(OrderStudy::from_measurements(values[..values.len() - 1].to_vec(), diffs))
        }
        SweepParameter::Grid if measurements.len() == values.len() => {
            let hs: Vec<f64> = values.iter().map(|&n| 1.0 / (n - 1.0)).collect();
            Some(OrderStudy::from_measurements(hs, measurements.clone()))
        }
        _ => None,
    };
    if let Some(study) = study {
        let order_ok = (study.order - CONVERGENCE_ORDER).abs() <= CONVERGENCE_ORDER_TOL;
        if !order_ok {
            report.passed = false;
            report.failures.push(format!(
                "fitted order {:.3} outside {CONVERGENCE_ORDER} ± {CONVERGENCE_ORDER_TOL}",
                study.order
            ));
        }
        report.order = Some(study.order);
        report.pair_orders = Some(study.pair_orders);
        report.resolutions = Some(study.resolutions);
        report.measurements = Some(study.errors);
        report.order_target = Some(CONVERGENCE_ORDER);
        report.order_tolerance = Some(CONVERGENCE_ORDER_TOL);
    }

    fs::write(
        out_dir.join("sweep_report.json"),
        serde_json::to_string_pretty(&report).expect("sweep report serializes"),
    )
    .map_err(|e| io_err("writing sweep_report.json", e))?;

    if !quiet {
        for p in &report.points {
            println!(
                "[{}] {} = {}: {} ({})",
                if p.passed { "PASS" } else { "FAIL" },
                report.parameter,
                p.value,
                p.status,
                p.detail
            );
        }
        if let Some(order) = report.order {
            println!("fitted order: {order:.3}");
        }
        println!("aggregate report: {}", out_dir.join("sweep_report.json").display());
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Certificate(format!(
            "{} of {} sweep points failed: {}",
            report.failures.len(),
            report.points.len(),
            report.failures.join("; ")
        )))
    }
}
