//! Experiment dispatch and output files.
//!
//! CSV columns (floats with 17 significant digits):
//!
//! - `energy.csv`: `path,n,t,v_sq,dv_sum,u_b_sq,du_b_sum,damping,forcing,noise,lhs,rhs,defect,relative_defect,defect_bound`
//! - `apriori.csv`: `n,t,lhs,lhs_se,rhs,rhs_se,margin,margin_se,ok`
//! - `convergence.csv`: `steps,nodes,modes,v_final,v_final_se,v_final_lo,v_final_hi,u_final,u_final_se,u_final_lo,u_final_hi,v_va,v_va_se,v_va_lo,v_va_hi`
//! - `uniqueness.csv`: `path,max_dv,max_du_b`
//! - `assumptions.csv`: `check,violations,worst_margin`
//! - `trajectory_<i>.csv`: `n,t,v_norm,u_b_norm,newton_iters,residual`
//!
//! `manifest.json` holds the config echo, derived constants, seeds and
//! timing; it is the only file carrying timestamps. A failed run writes
//! `failure.json` instead of raising.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentKind, OutputFormat, RunConfig};
use crate::analysis::{
    audit_apriori, audit_energy, convergence_study, coupled_path, run_paths, uniqueness_experiment, EnergyLedger,
    EnsembleStats, MeanSe,
};
use crate::error::Error;
use crate::operators::{check_assumptions, ProblemSpec};
use crate::stepper::{integrate, ForcingGrid, SchemeParams, Trajectory};

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Ok,
    Config,
    AuditViolation,
    NonConvergence,
    Io,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            Self::Ok => 0,
            Self::Config => 2,
            Self::AuditViolation => 3,
            Self::NonConvergence => 4,
            Self::Io => 5,
        }
    }

    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::NonConvergence { .. } => Self::NonConvergence,
            Error::Io(_) => Self::Io,
            _ => Self::Config,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub gate: bool,
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { gate: true, workers: 1 }
    }
}

/// Machine-readable record of a failed run.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub status: ExitStatus,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl Failure {
    fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            exit_code: status.code(),
            message: message.into(),
            path: None,
            step: None,
            residual: None,
            history: Vec::new(),
        }
    }

    fn from_error(e: Error, path: Option<u64>) -> Self {
        let mut f = Self::new(ExitStatus::of_error(&e), e.to_string());
        f.path = path;
        if let Error::NonConvergence { step, residual, history, .. } = e {
            f.step = Some(step);
            f.residual = Some(residual);
            f.history = history;
        }
        f
    }
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(cells: &[String]) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

struct Output<'a> {
    dir: &'a Path,
    csv: bool,
    json: bool,
    written: Vec<String>,
}

impl Output<'_> {
    fn file(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        if self.csv {
            self.file(name, body)?;
        }
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> std::io::Result<()> {
        if self.json {
            let text = serde_json::to_string_pretty(value).expect("report serializes");
            self.file(name, &text)?;
        }
        Ok(())
    }
}

/// What an experiment produced besides its files.
struct Outcome {
    summary: Value,
    failure: Option<Failure>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Self { summary, failure: None }
    }

    fn audit(summary: Value, passed: bool, message: impl Into<String>) -> Self {
        let failure = (!passed).then(|| Failure::new(ExitStatus::AuditViolation, message));
        Self { summary, failure }
    }
}

/// Run a validated config, writing every artifact into
/// `config.output.directory`. Never panics on experiment failure; the
/// returned status says what happened and `failure.json` has details.
pub fn run_experiment(config: &RunConfig, opts: &RunOptions) -> ExitStatus {
    let dir = config.output.directory.clone();
    let started = SystemTime::now();
    let clock = Instant::now();
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("cannot create {}: {e}", dir.display());
        return ExitStatus::Io;
    }
    let mut out = Output {
        dir: &dir,
        csv: config.output.formats.contains(&OutputFormat::Csv),
        json: config.output.formats.contains(&OutputFormat::Json),
        written: Vec::new(),
    };
    let result = dispatch(config, opts, &mut out);
    let (summary, failure) = match result {
        Ok(o) => (o.summary, o.failure),
        Err(f) => (Value::Null, Some(f)),
    };
    let status = failure.as_ref().map_or(ExitStatus::Ok, |f| f.status);
    if let Some(f) = &failure {
        let text = serde_json::to_string_pretty(f).expect("failure serializes");
        if let Err(e) = fs::write(dir.join("failure.json"), text) {
            eprintln!("cannot write failure record: {e}");
            return ExitStatus::Io;
        }
        out.written.push("failure.json".into());
    }
    let manifest = json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "derived": config.derived().ok(),
        "experiment": config.experiment.kind,
        "base_seed": config.experiment.base_seed,
        "paths": config.experiment.paths,
        "gate_enforced": opts.gate,
        "workers": opts.workers,
        "started_unix": unix_seconds(started),
        "finished_unix": unix_seconds(SystemTime::now()),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "status": status,
        "exit_code": status.code(),
        "summary": summary,
        "files": out.written,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = fs::write(dir.join("manifest.json"), text) {
        eprintln!("cannot write manifest: {e}");
        return ExitStatus::Io;
    }
    status
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn io(e: std::io::Error) -> Failure {
    Failure::new(ExitStatus::Io, e.to_string())
}

fn setup(config: &RunConfig, opts: &RunOptions) -> Result<(ProblemSpec, SchemeParams, ForcingGrid), Failure> {
    let d = &config.discretization;
    let spec = config.spec().map_err(|e| Failure::new(ExitStatus::Config, e.to_string()))?;
    let params = if opts.gate {
        SchemeParams::new(&spec, d.steps, d.horizon, config.solver)
    } else {
        SchemeParams::ungated(d.steps, d.horizon, config.solver)
    }
    .map_err(|e| Failure::new(ExitStatus::Config, e.to_string()))?;
    let forcing = ForcingGrid::for_spec(&spec, &params);
    Ok((spec, params, forcing))
}

fn dispatch(config: &RunConfig, opts: &RunOptions, out: &mut Output<'_>) -> Result<Outcome, Failure> {
    match config.experiment.kind {
        ExperimentKind::Single | ExperimentKind::Energy => energy(config, opts, out),
        ExperimentKind::Apriori => apriori(config, opts, out),
        ExperimentKind::Uniqueness => uniqueness(config, opts, out),
        ExperimentKind::Convergence => convergence(config, opts, out),
        ExperimentKind::Assumptions => assumptions(config, out),
    }
}

/// Integrate every path, keeping per-path results in order. The first
/// failing path (lowest index) is reported.
fn integrate_paths<T: Send>(
    config: &RunConfig,
    spec: &ProblemSpec,
    params: &SchemeParams,
    forcing: &ForcingGrid,
    f: impl Fn(u64, Trajectory, &crate::noise::WienerPath) -> crate::Result<T> + Sync,
) -> Result<Vec<T>, Failure> {
    let e = &config.experiment;
    let modes = spec.noise().modes();
    let results = run_paths(e.paths, |i| {
        let path = coupled_path(params.steps(), params.steps(), modes, params.horizon(), e.base_seed, i)?;
        let traj = integrate(spec, params, &path, forcing)?;
        f(i, traj, &path)
    });
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|err| Failure::from_error(err, Some(i as u64))))
        .collect()
}

fn energy(config: &RunConfig, opts: &RunOptions, out: &mut Output<'_>) -> Result<Outcome, Failure> {
    let (spec, params, forcing) = setup(config, opts)?;
    let keep = config.output.trajectories;
    let results = integrate_paths(config, &spec, &params, &forcing, |_, traj, path| {
        let ledger = audit_energy(&traj, path, &forcing, &spec, &params)?;
        Ok((ledger, keep.then_some(traj)))
    })?;
    let mut csv = row(&[
        "path", "n", "t", "v_sq", "dv_sum", "u_b_sq", "du_b_sum", "damping", "forcing", "noise", "lhs", "rhs", "defect",
        "relative_defect", "defect_bound",
    ]
    .map(String::from));
    for (i, (ledger, traj)) in results.iter().enumerate() {
        write_ledger(&mut csv, i, ledger, &params);
        if let Some(traj) = traj {
            out.csv(&format!("trajectory_{i}.csv"), &trajectory_csv(traj, &spec, &params))
                .map_err(io)?;
        }
    }
    out.csv("energy.csv", &csv).map_err(io)?;
    let ledgers: Vec<&EnergyLedger> = results.iter().map(|(l, _)| l).collect();
    out.json("energy.json", &ledgers).map_err(io)?;
    let worst = ledgers.iter().map(|l| l.max_relative_defect()).fold(0.0, f64::max);
    let summary = json!({ "max_relative_defect": worst });
    if config.experiment.kind == ExperimentKind::Single {
        return Ok(Outcome::ok(summary));
    }
    let tol = config.experiment.energy_tolerance;
    Ok(Outcome::audit(
        summary,
        worst <= tol,
        format!("relative energy defect {worst:e} exceeds {tol:e}"),
    ))
}

fn write_ledger(csv: &mut String, path: usize, ledger: &EnergyLedger, params: &SchemeParams) {
    for r in &ledger.rows {
        let n = r.n;
        let cells = [
            path.to_string(),
            n.to_string(),
            f(params.time(n)),
            f(r.v_sq),
            f(r.dv_sum),
            f(r.u_b_sq),
            f(r.du_b_sum),
            f(r.damping),
            f(r.forcing),
            f(r.noise),
            f(ledger.lhs(n)),
            f(ledger.rhs(n)),
            f(ledger.defect(n)),
            f(ledger.relative_defect(n)),
            f(r.defect_bound),
        ];
        csv.push_str(&row(&cells));
    }
}

fn trajectory_csv(traj: &Trajectory, spec: &ProblemSpec, params: &SchemeParams) -> String {
    let mut csv = row(&["n", "t", "v_norm", "u_b_norm", "newton_iters", "residual"].map(String::from));
    for n in 0..=traj.steps() {
        let (iters, residual) = match n {
            0 => (0, 0.0),
            _ => (traj.stats[n - 1].newton_iters, traj.stats[n - 1].residual),
        };
        let cells = [
            n.to_string(),
            f(params.time(n)),
            f(spec.norm_h_sq(&traj.v[n]).sqrt()),
            f(spec.norm_b_sq(&traj.u[n]).sqrt()),
            iters.to_string(),
            f(residual),
        ];
        csv.push_str(&row(&cells));
    }
    csv
}

fn apriori(config: &RunConfig, opts: &RunOptions, out: &mut Output<'_>) -> Result<Outcome, Failure> {
    let (spec, params, forcing) = setup(config, opts)?;
    let e = &config.experiment;
    let (stats, _) = EnsembleStats::collect(&spec, &params, &forcing, e.paths, e.base_seed, params.steps())
        .map_err(|err| Failure::from_error(err, None))?;
    let report = audit_apriori(&stats);
    let mut csv = row(&["n", "t", "lhs", "lhs_se", "rhs", "rhs_se", "margin", "margin_se", "ok"].map(String::from));
    for (k, r) in report.rows.iter().enumerate() {
        let cells = [
            r.n.to_string(),
            f(params.time(r.n)),
            f(r.lhs),
            f(stats.apriori_lhs[k].se),
            f(r.rhs),
            f(stats.apriori_rhs[k].se),
            f(r.margin),
            f(r.margin_se),
            r.ok.to_string(),
        ];
        csv.push_str(&row(&cells));
    }
    out.csv("apriori.csv", &csv).map_err(io)?;
    out.json("apriori.json", &json!({ "stats": stats, "report": report }))
        .map_err(io)?;
    let summary = json!({
        "violations": report.violations(),
        "worst_z": finite_or_null(report.worst_z()),
        "sup_v_sq": stats.sup_v_sq,
        "sup_u_b_sq": stats.sup_u_b_sq,
    });
    let violations = report.violations();
    Ok(Outcome::audit(
        summary,
        report.passed(),
        format!("a priori bound violated at {violations} steps"),
    ))
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn uniqueness(config: &RunConfig, opts: &RunOptions, out: &mut Output<'_>) -> Result<Outcome, Failure> {
    let (spec, params, forcing) = setup(config, opts)?;
    let e = &config.experiment;
    let modes = spec.noise().modes();
    let results = run_paths(e.paths, |i| {
        let path = coupled_path(params.steps(), params.steps(), modes, params.horizon(), e.base_seed, i)?;
        uniqueness_experiment(&spec, &params, &path, &forcing, e.perturbation, e.base_seed ^ i)
    });
    let mut csv = row(&["path", "max_dv", "max_du_b"].map(String::from));
    let mut worst = 0.0f64;
    let mut reports = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let r = r.map_err(|err| Failure::from_error(err, Some(i as u64)))?;
        csv.push_str(&row(&[i.to_string(), f(r.max_dv), f(r.max_du_b)]));
        worst = worst.max(r.max_dv);
        reports.push(r);
    }
    out.csv("uniqueness.csv", &csv).map_err(io)?;
    out.json("uniqueness.json", &reports).map_err(io)?;
    let bound = 10.0 * config.solver.tol;
    Ok(Outcome::audit(
        json!({ "max_dv": worst, "bound": bound }),
        worst <= bound,
        format!("twin runs differ by {worst:e} > {bound:e}"),
    ))
}

fn convergence(config: &RunConfig, opts: &RunOptions, out: &mut Output<'_>) -> Result<Outcome, Failure> {
    let e = &config.experiment;
    let report = convergence_study(
        &config.family(),
        config.discretization.horizon,
        &config.study_levels(),
        e.reference,
        config.solver,
        e.paths,
        e.base_seed,
        opts.gate,
    )
    .map_err(|err| Failure::from_error(err, None))?;
    let mut csv = row(&[
        "steps", "nodes", "modes", "v_final", "v_final_se", "v_final_lo", "v_final_hi", "u_final", "u_final_se",
        "u_final_lo", "u_final_hi", "v_va", "v_va_se", "v_va_lo", "v_va_hi",
    ]
    .map(String::from));
    for r in &report.rows {
        let mut cells = vec![r.level.steps.to_string(), r.level.nodes.to_string(), r.level.modes.to_string()];
        for m in [r.v_final, r.u_final, r.v_va] {
            cells.extend(mean_cells(m));
        }
        csv.push_str(&row(&cells));
    }
    out.csv("convergence.csv", &csv).map_err(io)?;
    out.json("convergence.json", &report).map_err(io)?;
    let summary = json!({
        "v_final_decreasing": report.v_final_decreasing(),
        "u_final_decreasing": report.u_final_decreasing(),
        "v_va_decreasing": report.v_va_decreasing(),
        "failed_paths": report.failures.len(),
    });
    if let Some(first) = report.failures.first() {
        let mut failure = Failure::new(ExitStatus::NonConvergence, first.message.clone());
        failure.path = Some(first.path);
        return Ok(Outcome { summary, failure: Some(failure) });
    }
    let passed = report.v_final_decreasing() && report.u_final_decreasing();
    Ok(Outcome::audit(summary, passed, "errors do not decrease across levels"))
}

fn mean_cells(m: MeanSe) -> [String; 4] {
    let (lo, hi) = m.ci95();
    [f(m.mean), f(m.se), f(lo), f(hi)]
}

fn assumptions(config: &RunConfig, out: &mut Output<'_>) -> Result<Outcome, Failure> {
    let spec = config.spec().map_err(|e| Failure::new(ExitStatus::Config, e.to_string()))?;
    let report = check_assumptions(&spec, config.experiment.samples, config.experiment.base_seed);
    let mut csv = String::new();
    writeln!(csv, "check,violations,worst_margin").expect("string write");
    for c in &report.checks {
        csv.push_str(&row(&[c.name.to_string(), c.violations.to_string(), f(c.worst_margin)]));
    }
    out.csv("assumptions.csv", &csv).map_err(io)?;
    out.json("assumptions.json", &report).map_err(io)?;
    let total = report.total_violations();
    Ok(Outcome::audit(
        json!({ "violations": total }),
        total == 0,
        format!("{total} assumption violations"),
    ))
}
