//! Simulation configuration: TOML schema, built-in presets and validation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rotmaster::angmom::{coherent_state, PureState, RotBasis};
use rotmaster::coupling::FieldConfig;
use rotmaster::lindblad::{Integrator, PropagateOptions};
use rotmaster::ode::Dopri5;
use rotmaster::trajectories::TrajectoryOptions;
use rotmaster::vibvalidity::{DEFAULT_MARGIN, DEFAULT_NU_MAX};
use rotmaster::{Error, Result};
use serde::{Deserialize, Serialize};

/// Rotational levels kept above the initial state for heating.
pub const HEADROOM: u32 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Lindblad,
    Trajectories,
    #[default]
    Both,
}

impl Backend {
    pub fn lindblad(self) -> bool {
        matches!(self, Backend::Lindblad | Backend::Both)
    }

    pub fn trajectories(self) -> bool {
        matches!(self, Backend::Trajectories | Backend::Both)
    }
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lindblad" => Ok(Backend::Lindblad),
            "trajectories" => Ok(Backend::Trajectories),
            "both" => Ok(Backend::Both),
            _ => Err(format!("unknown backend `{s}` (expected lindblad, trajectories or both)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitude {
    pub j: u32,
    pub m: i32,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    Coherent { j: u32, theta: f64, phi: f64 },
    Basis { j: u32, m: i32 },
    /// Explicit amplitudes, normalized on construction.
    Amplitudes { amplitudes: Vec<Amplitude> },
}

impl InitialState {
    fn max_j(&self) -> u32 {
        match self {
            InitialState::Coherent { j, .. } | InitialState::Basis { j, .. } => *j,
            InitialState::Amplitudes { amplitudes } => amplitudes.iter().map(|a| a.j).max().unwrap_or(0),
        }
    }

    pub fn build(&self, basis: Arc<RotBasis>) -> Result<PureState> {
        match self {
            InitialState::Coherent { j, theta, phi } => coherent_state(basis, *j, *theta, *phi),
            InitialState::Basis { j, m } => PureState::basis_state(basis, *j, *m),
            InitialState::Amplitudes { amplitudes } => {
                let mut amps = vec![Complex64::new(0.0, 0.0); basis.len()];
                for a in amplitudes {
                    let i = basis.index(a.j, a.m).ok_or(Error::Truncation { j: a.j, j_max: basis.j_max() })?;
                    amps[i] = Complex64::new(a.re, a.im);
                }
                let mut state = PureState::new(basis, amps);
                state.normalize();
                Ok(state)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Final time in units of `1/B`.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { t_max: default_t_max(), n_points: default_n_points() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub integrator: Integrator,
    pub rtol: f64,
    pub atol: f64,
    /// Exact propagator steps per output interval.
    pub exact_substeps: usize,
    pub trace: f64,
    pub positivity: f64,
    /// Grid stride of the eigenvalue check (0 disables it).
    pub positivity_stride: usize,
    /// Relative resolution of jump times.
    pub jump_time: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let lindblad = PropagateOptions::default();
        let traj = TrajectoryOptions::default();
        Tolerances {
            integrator: lindblad.integrator,
            rtol: lindblad.tolerance.rtol,
            atol: lindblad.tolerance.atol,
            exact_substeps: lindblad.exact_substeps,
            trace: lindblad.trace_tolerance,
            positivity: lindblad.positivity_tolerance,
            positivity_stride: lindblad.positivity_stride,
            jump_time: traj.time_tolerance,
        }
    }
}

/// Vibrational ratios for the heating estimate; any missing one leaves the
/// validity report unevaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationRatios {
    pub eta: Option<f64>,
    pub omega_nu_over_b: Option<f64>,
    pub delta_over_b: Option<f64>,
    #[serde(default = "default_nu_max")]
    pub nu_max: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: String,
    /// Write every jump (trajectory, time, channel) to `jumps.csv`.
    pub jump_log: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: "out".into(), jump_log: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_j_max")]
    pub j_max: u32,
    pub initial: InitialState,
    pub field: FieldConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_leakage")]
    pub leakage_threshold: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub vibration: Option<VibrationRatios>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_j_max() -> u32 {
    12
}
fn default_t_max() -> f64 {
    20.0
}
fn default_n_points() -> usize {
    2000
}
fn default_n_traj() -> usize {
    2000
}
fn default_seed() -> u64 {
    1234
}
fn default_leakage() -> f64 {
    1e-6
}
fn default_nu_max() -> usize {
    DEFAULT_NU_MAX
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

const KERR_FIG2: &str = r#"# Optical Kerr geometry: x-polarized cw field, coherent j = 2 state along y.
j_max = 12
backend = "both"
n_traj = 2000
master_seed = 1234

[initial]
kind = "coherent"
j = 2
theta = 1.5707963267948966
phi = 1.5707963267948966

[field]
omega_r = 0.1
gamma_over_delta = 0.01

[[field.components]]
amplitude = [1.0, 0.0]
polarization = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]

[grid]
t_max = 20.0
n_points = 2000
"#;

/// Built-in presets: name, description, TOML text.
pub const PRESETS: [(&str, &str, &str); 2] = [
    ("kerr-fig2", "Kerr geometry, Omega_R/B = 0.1, Gamma/Delta = 0.01, j = 2 along y", KERR_FIG2),
    ("kerr-fig2-unitary", "same without spontaneous scattering (Gamma/Delta = 0)", KERR_FIG2),
];

pub fn preset_text(name: &str) -> Option<String> {
    let (_, _, text) = PRESETS.iter().find(|(n, _, _)| *n == name)?;
    Some(match name {
        "kerr-fig2-unitary" => {
            text.replace("gamma_over_delta = 0.01", "gamma_over_delta = 0.0").replace("backend = \"both\"", "backend = \"lindblad\"")
        }
        _ => text.to_string(),
    })
}

pub fn preset(name: &str) -> Result<Scenario> {
    let text = preset_text(name).ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))?;
    parse_scenario(&text)
}

/// Recursive table merge; a table carrying its own `kind` replaces the base.
fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parses and validates a scenario. A top-level `preset = "<name>"` key
/// starts from that preset; every other key overrides it.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        Error::config("<document>", e.message().to_string() + &location(text, e.span()))
    })?;
    if let Some(name) = table.remove("preset") {
        let name = name.as_str().ok_or_else(|| Error::config("preset", "must be a string"))?.to_string();
        let text = preset_text(&name).ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))?;
        let mut base: toml::Table = text.parse().expect("built-in preset parses");
        merge(&mut base, table);
        table = base;
    }
    let scenario: Scenario = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<document>".into() } else { path }, e.into_inner().message().to_string())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn location(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) => {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

impl Scenario {
    /// Checks every invariant; returns warnings for questionable but legal settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = self.field.validate()?;
        let j0 = self.initial.max_j();
        if j0 + HEADROOM > self.j_max {
            return Err(Error::config(
                "j_max",
                format!("initial j = {j0} needs j_max ≥ {} to leave room for heating", j0 + HEADROOM),
            ));
        }
        match &self.initial {
            InitialState::Coherent { theta, phi, .. } => {
                if !(0.0..=PI).contains(theta) {
                    return Err(Error::config("initial.theta", format!("must lie in [0, π], got {theta}")));
                }
                if !(0.0..2.0 * PI).contains(phi) {
                    return Err(Error::config("initial.phi", format!("must lie in [0, 2π), got {phi}")));
                }
            }
            InitialState::Basis { j, m } => {
                if m.unsigned_abs() > *j {
                    return Err(Error::config("initial.m", format!("|m| must not exceed j = {j}")));
                }
            }
            InitialState::Amplitudes { amplitudes } => {
                if amplitudes.is_empty() {
                    return Err(Error::config("initial.amplitudes", "at least one amplitude is required"));
                }
                let mut norm = 0.0;
                for (k, a) in amplitudes.iter().enumerate() {
                    if a.m.unsigned_abs() > a.j {
                        return Err(Error::config(format!("initial.amplitudes[{k}].m"), "|m| must not exceed j"));
                    }
                    if !(a.re.is_finite() && a.im.is_finite()) {
                        return Err(Error::config(format!("initial.amplitudes[{k}]"), "must be finite"));
                    }
                    if amplitudes[..k].iter().any(|b| (b.j, b.m) == (a.j, a.m)) {
                        return Err(Error::config(
                            format!("initial.amplitudes[{k}]"),
                            format!("duplicate entry for (j, m) = ({}, {})", a.j, a.m),
                        ));
                    }
                    norm += a.re * a.re + a.im * a.im;
                }
                if norm == 0.0 {
                    return Err(Error::config("initial.amplitudes", "state must not vanish"));
                }
                if (norm - 1.0).abs() > 1e-12 {
                    warnings.push(format!("initial.amplitudes have squared norm {norm}; normalized"));
                }
            }
        }
        if !(self.grid.t_max.is_finite() && self.grid.t_max > 0.0) {
            return Err(Error::config("grid.t_max", "must be positive and finite"));
        }
        if self.grid.n_points < 2 {
            return Err(Error::config("grid.n_points", "at least two output times are required"));
        }
        if self.backend.trajectories() && self.n_traj == 0 {
            return Err(Error::config("n_traj", "at least one trajectory is required"));
        }
        if self.leakage_threshold.is_nan() || self.leakage_threshold <= 0.0 {
            return Err(Error::config("leakage_threshold", "must be positive"));
        }
        let t = &self.tolerances;
        for (name, v) in [("rtol", t.rtol), ("atol", t.atol), ("trace", t.trace), ("positivity", t.positivity), ("jump_time", t.jump_time)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("tolerances.{name}"), "must be positive and finite"));
            }
        }
        if t.exact_substeps == 0 {
            return Err(Error::config("tolerances.exact_substeps", "must be at least 1"));
        }
        if let Some(v) = &self.vibration {
            for (name, x) in [("eta", v.eta), ("omega_nu_over_b", v.omega_nu_over_b), ("delta_over_b", v.delta_over_b)] {
                if x.is_some_and(|x| !(x.is_finite() && x > 0.0)) {
                    return Err(Error::config(format!("vibration.{name}"), "must be positive and finite"));
                }
            }
            if !(v.margin.is_finite() && v.margin > 0.0) {
                return Err(Error::config("vibration.margin", "must be positive and finite"));
            }
        }
        Ok(warnings)
    }

    pub fn grid(&self) -> Vec<f64> {
        rotmaster::lindblad::uniform_grid(self.grid.t_max, self.grid.n_points)
    }

    pub fn propagate_options(&self) -> PropagateOptions {
        let t = &self.tolerances;
        PropagateOptions {
            integrator: t.integrator,
            tolerance: Dopri5 { rtol: t.rtol, atol: t.atol, ..Dopri5::default() },
            exact_substeps: t.exact_substeps,
            leakage_threshold: self.leakage_threshold,
            trace_tolerance: t.trace,
            positivity_tolerance: t.positivity,
            positivity_stride: t.positivity_stride,
            snapshots: Vec::new(),
        }
    }

    pub fn trajectory_options(&self) -> TrajectoryOptions {
        let t = &self.tolerances;
        TrajectoryOptions {
            integrator: t.integrator,
            tolerance: Dopri5 { rtol: t.rtol, atol: t.atol, ..Dopri5::default() },
            time_tolerance: t.jump_time,
            leakage_threshold: self.leakage_threshold,
            density_snapshots: Vec::new(),
        }
    }

    /// The scenario as JSON without the output section, which does not affect results.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("scenario serializes");
        v.as_object_mut().expect("object").remove("output");
        v
    }
}
