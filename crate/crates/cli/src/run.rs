//! Runs a scenario through the selected backends and writes its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rotmaster::coupling::CouplingSet;
use rotmaster::lindblad::{propagate, DensityMatrix, ObservableSeries, Propagation};
use rotmaster::model::Model;
use rotmaster::trajectories::{run_ensemble, EnsembleResult};
use rotmaster::vibvalidity::{closed_form_moments, max_valid_time_with_margin, VibRateModel};
use rotmaster::Error;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::output::{error_values, jump_log_csv, record_values, series_csv, Metadata, COLUMNS};
use crate::scenario::Scenario;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const LINDBLAD_FILE: &str = "lindblad.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const JUMPS_FILE: &str = "jumps.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ERROR_FILE: &str = "error.json";

/// Agreement floor between backends, in the units of each observable.
pub const COMPARISON_FLOOR: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Invalid(Error),
    #[error("{0}")]
    Numerical(Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            RunError::Numerical(e)
        } else {
            RunError::Invalid(e)
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io { .. } => 1,
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> Value {
        let kind = match self {
            RunError::Invalid(Error::Config { .. }) => "config",
            RunError::Invalid(_) => "validation",
            RunError::Numerical(Error::Leakage { .. }) => "leakage",
            RunError::Numerical(Error::TraceDrift { .. }) => "trace_drift",
            RunError::Numerical(Error::Positivity { .. }) => "positivity",
            RunError::Numerical(_) => "numerical",
            RunError::Io { .. } => "io",
        };
        let mut record = json!({ "error": kind, "message": self.to_string(), "exit_code": self.exit_code() });
        if let RunError::Invalid(Error::Config { path, .. }) = self {
            record["path"] = json!(path);
        }
        record
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

pub fn scenario_hash(scenario: &Scenario) -> String {
    let text = serde_json::to_string(&scenario.echo()).expect("scenario serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything computed for one scenario, before anything is written.
pub struct Computed {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
    pub sector_dim: usize,
    pub lindblad: Option<Propagation>,
    pub ensemble: Option<EnsembleResult>,
}

/// Validates and runs the backends. `workers` sizes the trajectory thread
/// pool; results do not depend on it.
pub fn compute(scenario: &Scenario, workers: Option<usize>) -> Result<Computed, RunError> {
    let warnings = scenario.validate()?;
    let coupling = Arc::new(CouplingSet::new(scenario.j_max));
    let psi0 = scenario.initial.build(coupling.ground().clone())?;
    let model = Model::for_state(coupling, &scenario.field, &psi0);
    let grid = scenario.grid();

    let lindblad = if scenario.backend.lindblad() {
        Some(propagate(&model, &DensityMatrix::pure(&psi0), &grid, &scenario.propagate_options())?)
    } else {
        None
    };
    let ensemble = if scenario.backend.trajectories() {
        let options = scenario.trajectory_options();
        let job = || run_ensemble(&model, &psi0, &grid, scenario.master_seed, scenario.n_traj, &options);
        Some(match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| RunError::Invalid(Error::config("workers", e.to_string())))?
                .install(job)?,
            None => job()?,
        })
    } else {
        None
    };
    Ok(Computed { scenario: scenario.clone(), warnings, sector_dim: model.dim(), lindblad, ensemble })
}

/// Largest backend differences; each point is held to `max(3 SE, COMPARISON_FLOOR)`.
pub fn compare(lindblad: &ObservableSeries, ensemble: &ObservableSeries) -> Value {
    let errors = ensemble.errors.as_deref().unwrap_or(&[]);
    let mut max_delta = serde_json::Map::new();
    let mut violations = 0usize;
    let (mut worst_jy, mut worst_jy_t) = (0.0f64, 0.0);
    // columns with an error estimate: all but t and trace
    let with_se = [1usize, 2, 3, 4, 5, 6, 7, 8, 10];
    let mut worst = [0.0f64; 11];
    for (k, (a, b)) in lindblad.records.iter().zip(&ensemble.records).enumerate() {
        let (va, vb) = (record_values(a), record_values(b));
        let se = errors.get(k).map(error_values);
        for (slot, &c) in with_se.iter().enumerate() {
            let d = (va[c] - vb[c]).abs();
            worst[c] = worst[c].max(d);
            let allowed = se.map_or(COMPARISON_FLOOR, |s| (3.0 * s[slot]).max(COMPARISON_FLOOR));
            if d > allowed {
                violations += 1;
            }
        }
        let djy = (va[2] - vb[2]).abs();
        if djy > worst_jy {
            (worst_jy, worst_jy_t) = (djy, a.t);
        }
    }
    for &c in &with_se {
        max_delta.insert(COLUMNS[c].to_string(), json!(worst[c]));
    }
    json!({
        "max_abs_delta_Jy": worst_jy,
        "max_abs_delta_Jy_at_t": worst_jy_t,
        "max_abs_delta": max_delta,
        "points_outside_max_3se_or_floor": violations,
        "floor": COMPARISON_FLOOR,
    })
}

/// Vibrational validity block; "not evaluated" unless every ratio is supplied.
pub fn validity_report(scenario: &Scenario) -> Value {
    let Some(v) = scenario.vibration else {
        return json!({ "status": "not evaluated", "reason": "no [vibration] ratios supplied" });
    };
    let (eta, omega_nu, delta) = match (v.eta, v.omega_nu_over_b, v.delta_over_b) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            let missing: Vec<&str> = [("eta", v.eta), ("omega_nu_over_b", v.omega_nu_over_b), ("delta_over_b", v.delta_over_b)]
                .iter()
                .filter(|(_, x)| x.is_none())
                .map(|(n, _)| *n)
                .collect();
            return json!({ "status": "not evaluated", "missing": missing });
        }
    };
    let rate = scenario.field.omega_r * scenario.field.gamma_over_delta;
    let t_max = scenario.grid.t_max;
    if rate == 0.0 {
        return json!({
            "status": "within validity regime",
            "reason": "no spontaneous Raman scattering (Omega_R Gamma/Delta = 0)",
            "t_max": t_max,
        });
    }
    let model = VibRateModel { eta, rate_prefactor: rate, nu_max: v.nu_max, omega_nu_over_b: omega_nu, delta_over_b: delta };
    let bound = match max_valid_time_with_margin(&model, v.margin) {
        Ok(b) => b,
        Err(e) => return json!({ "status": "not evaluated", "reason": e.to_string() }),
    };
    let at_end = closed_form_moments(&model, t_max);
    let mut report = json!({
        "eta": eta,
        "omega_nu_over_b": omega_nu,
        "delta_over_b": delta,
        "rate_prefactor": rate,
        "margin": bound.margin,
        "tau_max_margin": bound.margin_bound,
        "tau_max_exact_crossing": bound.exact_crossing,
        "t_max": t_max,
        "nu_bar_at_t_max": at_end.nu_bar,
        "delta_nu_at_t_max": at_end.var_nu.sqrt(),
    });
    if t_max <= bound.margin_bound {
        report["status"] = json!("within validity regime");
    } else {
        report["status"] = json!("exceeds validity bound");
        report["warning"] = json!(format!(
            "t_max = {t_max} exceeds tau_max = {} (margin c = {}); vibrational spreading reaches the detuning at tau = {}",
            bound.margin_bound, bound.margin, bound.exact_crossing
        ));
    }
    report
}

pub fn summary(c: &Computed) -> Value {
    let s = &c.scenario;
    let mut summary = json!({
        "code_version": VERSION,
        "scenario_sha256": scenario_hash(s),
        "scenario": s.echo(),
        "master_seed": s.master_seed,
        "sector_dimension": c.sector_dim,
        "warnings": c.warnings,
        "validity": validity_report(s),
    });
    let grid = s.grid();
    let expected = c.lindblad.as_ref().map(|p| p.diagnostics.expected_jumps(&grid));
    if let Some(p) = &c.lindblad {
        let d = &p.diagnostics;
        summary["lindblad"] = json!({
            "file": LINDBLAD_FILE,
            "integrator": d.integrator,
            "max_trace_drift": d.max_trace_drift,
            "max_hermiticity_residual": d.max_hermiticity_residual,
            "min_eigenvalue": d.min_eigenvalue,
            "expected_jumps": expected,
            "accepted_steps": d.accepted_steps,
            "rejected_steps": d.rejected_steps,
            "rhs_evaluations": d.rhs_evaluations,
        });
    }
    if let Some(e) = &c.ensemble {
        let (mean, se) = e.jump_count_mean();
        let [x, y, z] = e.channel_counts();
        summary["trajectories"] = json!({
            "file": TRAJECTORIES_FILE,
            "n_traj": e.n_traj,
            "total_jumps": e.total_jumps(),
            "jumps_per_trajectory": { "mean": mean, "standard_error": se },
            "max_jumps_in_one_trajectory": e.jumps.iter().map(Vec::len).max().unwrap_or(0),
            "channel_counts": { "x": x, "y": y, "z": z },
        });
    }
    if let (Some(p), Some(e)) = (&c.lindblad, &c.ensemble) {
        let mut block = compare(&p.series, &e.series);
        let (mean, se) = e.jump_count_mean();
        let expected = expected.expect("lindblad ran");
        block["jump_count"] = json!({
            "trajectory_mean": mean,
            "standard_error": se,
            "integrated_rate": expected,
            "z": if se > 0.0 { json!((mean - expected) / se) } else { Value::Null },
        });
        summary["comparison"] = block;
    }
    summary
}

fn metadata(s: &Scenario, backend: &str) -> Metadata {
    Metadata { version: VERSION.into(), scenario_sha256: scenario_hash(s), master_seed: s.master_seed, backend: backend.into() }
}

/// Writes every output of `c` into `dir` in one fixed sequence.
pub fn write_outputs(c: &Computed, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    if let Some(p) = &c.lindblad {
        files.push((dir.join(LINDBLAD_FILE), series_csv(&p.series, &metadata(&c.scenario, "lindblad"))));
    }
    if let Some(e) = &c.ensemble {
        let meta = metadata(&c.scenario, "trajectories");
        files.push((dir.join(TRAJECTORIES_FILE), series_csv(&e.series, &meta)));
        if c.scenario.output.jump_log {
            files.push((dir.join(JUMPS_FILE), jump_log_csv(&e.jumps, &meta)));
        }
    }
    let summary = serde_json::to_string_pretty(&summary(c)).expect("summary serializes") + "\n";
    files.push((dir.join(SUMMARY_FILE), summary));
    for (path, text) in &files {
        fs::write(path, text).map_err(io_error(path))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Full run into the scenario's output directory. On failure an error
/// record is written there as well (when the directory is writable).
pub fn simulate(scenario: &Scenario, workers: Option<usize>) -> Result<(Computed, Vec<PathBuf>), RunError> {
    let dir = PathBuf::from(&scenario.output.dir);
    let result = compute(scenario, workers).and_then(|c| {
        let files = write_outputs(&c, &dir)?;
        let stale = dir.join(ERROR_FILE);
        if stale.exists() {
            fs::remove_file(&stale).map_err(io_error(&stale))?;
        }
        Ok((c, files))
    });
    if let Err(e) = &result {
        if !matches!(e, RunError::Io { .. }) && fs::create_dir_all(&dir).is_ok() {
            let _ = fs::write(dir.join(ERROR_FILE), serde_json::to_string_pretty(&e.record()).expect("json") + "\n");
        }
    }
    result
}
