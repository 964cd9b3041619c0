//! Run configuration: a TOML document with one table per concern.
//!
//! ```toml
//! [run]
//! mode = "quantum"          # quantum | classical | correspondence | sweep
//! t_end = 120.0
//! dt = 2e-5
//! samples_per_period = 32
//! snapshots = [30.0, 40.0, 50.0]
//!
//! [model]
//! epsilon = 400.0
//! eta = 0.3
//!
//! [schedule]
//! kind = "cai"              # cai | cai_ramped | rabi | pi_pulse | constant | custom
//!
//! [grid]
//! z_min = -64.0
//! z_max = 64.0
//! n_points = 4096
//!
//! [init]
//! alpha_re = -14.142135623730951
//! spin = "up"
//! ```
//!
//! Every key has a default except `run.t_end`; unknown keys are rejected.

use crate::classical::ClassicalState;
use crate::model::{
    CaiParams, DriveSchedule, ModelError, Profile, ScheduleKind, Segment,
    SimParams,
};
use crate::quantum::{CoherentInit, FrameMode, GridSpec, PropagatorOptions, SpinInit};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed configuration: {0}")]
    Syntax(String),
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("`{field}`: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Param { field, message } => ConfigError::field(field, message),
            other => ConfigError::field("schedule", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Quantum,
    Classical,
    Correspondence,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub t_end: f64,
    pub dt: f64,
    pub samples_per_period: usize,
    pub snapshots: Vec<f64>,
    /// Classical integrator relative tolerance.
    pub rtol: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: Mode::Quantum,
            t_end: f64::NAN,
            dt: 2e-5,
            samples_per_period: 32,
            snapshots: Vec::new(),
            rtol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub epsilon: f64,
    pub eta: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            epsilon: 400.0,
            eta: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Cai,
    CaiRamped,
    Rabi,
    PiPulse,
    Constant,
    Custom,
}

/// `model.epsilon` doubles as the CAI rf amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleName,
    pub sweep_start: f64,
    pub sweep_duration: f64,
    pub modulation: f64,
    /// Multiplies ε, `sweep_start` and `modulation`.
    pub scale: f64,
    pub ramp_duration: f64,
    pub pulse_first: f64,
    pub pulse_spacing: f64,
    /// dφ/dτ of a `constant` schedule.
    pub dphi_dtau: f64,
    /// `custom` segments: `"start end | dφ/dτ profile | ε profile"` with
    /// profiles `poly c0 c1 ...` or `sin offset amplitude frequency phase`,
    /// both in `u = τ - start`.
    pub segments: Vec<String>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let c = CaiParams::<f64>::standard();
        ScheduleSection {
            kind: ScheduleName::Cai,
            sweep_start: c.sweep_start,
            sweep_duration: c.sweep_duration,
            modulation: c.modulation,
            scale: 1.0,
            ramp_duration: 20.0,
            pulse_first: std::f64::consts::PI,
            pulse_spacing: std::f64::consts::PI,
            dphi_dtau: 0.0,
            segments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameName {
    Fixed,
    CoMoving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
    pub frame: FrameName,
    /// Absorbing band fraction at each edge; 0 disables it.
    pub absorber: f64,
    /// Largest |⟨z⟩| the run is expected to reach; 0 skips the check.
    pub amplitude_bound: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            z_min: -64.0,
            z_max: 64.0,
            n_points: 4096,
            frame: FrameName::Fixed,
            absorber: 0.0,
            amplitude_bound: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinName {
    Up,
    Down,
    PlusX,
    AlongEff,
    OppositeEff,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub spin: SpinName,
    pub spin_theta: f64,
    pub spin_phi: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            alpha_re: -10.0 * std::f64::consts::SQRT_2,
            alpha_im: 0.0,
            spin: SpinName::Up,
            spin_theta: 0.0,
            spin_phi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub peak_threshold: f64,
    /// Phase-fit windows `[τ_a, τ_b]`.
    pub phase_windows: Vec<[f64; 2]>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            peak_threshold: crate::analysis::DEFAULT_PEAK_THRESHOLD,
            phase_windows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    DensityPanels,
    Trajectory,
    Decomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub plots: Vec<PlotKind>,
    /// Write snapshot records (amplitudes and densities).
    pub snapshots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            plots: vec![PlotKind::DensityPanels, PlotKind::Trajectory, PlotKind::Decomposition],
            snapshots: true,
        }
    }
}

/// Values to enumerate in sweep mode; empty lists keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Mode of each enumerated run.
    pub run_mode: Mode,
    pub eta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub schedule: Vec<ScheduleName>,
    pub spin: Vec<SpinName>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            run_mode: Mode::Quantum,
            eta: Vec::new(),
            epsilon: Vec::new(),
            schedule: Vec::new(),
            spin: Vec::new(),
        }
    }
}

/// Complete, defaulted run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub schedule: ScheduleSection,
    pub grid: GridSection,
    pub init: InitSection,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
    pub sweep: SweepSection,
}

const SECTIONS: [(&str, &[&str]); 8] = [
    (
        "run",
        &["mode", "t_end", "dt", "samples_per_period", "snapshots", "rtol"],
    ),
    ("model", &["epsilon", "eta"]),
    (
        "schedule",
        &[
            "kind",
            "sweep_start",
            "sweep_duration",
            "modulation",
            "scale",
            "ramp_duration",
            "pulse_first",
            "pulse_spacing",
            "dphi_dtau",
            "segments",
        ],
    ),
    (
        "grid",
        &["z_min", "z_max", "n_points", "frame", "absorber", "amplitude_bound"],
    ),
    ("init", &["alpha_re", "alpha_im", "spin", "spin_theta", "spin_phi"]),
    ("analysis", &["peak_threshold", "phase_windows"]),
    ("output", &["dir", "plots", "snapshots"]),
    ("sweep", &["run_mode", "eta", "epsilon", "schedule", "spin"]),
];

fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (name, value) in table {
        match SECTIONS.iter().find(|(s, _)| s == name) {
            None => out.push(name.clone()),
            Some((_, keys)) => match value.as_table() {
                Some(t) => {
                    let known: BTreeSet<&str> = keys.iter().copied().collect();
                    for k in t.keys() {
                        if !known.contains(k.as_str()) {
                            out.push(format!("{name}.{k}"));
                        }
                    }
                }
                None => out.push(name.clone()),
            },
        }
    }
    out
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let unknown = unknown_keys(&table);
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical text of a configuration (all defaults spelled out).
pub fn render(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        if !(r.t_end > 0.0) || !r.t_end.is_finite() {
            return Err(ConfigError::field("t_end", "must be a positive number"));
        }
        if !(r.dt > 0.0) {
            return Err(ConfigError::field("dt", "must be positive"));
        }
        if r.samples_per_period == 0 {
            return Err(ConfigError::field("samples_per_period", "must be at least 1"));
        }
        if !(r.rtol > 0.0 && r.rtol < 1e-2) {
            return Err(ConfigError::field("rtol", "must lie in (0, 0.01)"));
        }
        if r.snapshots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ConfigError::field("snapshots", "must be strictly increasing"));
        }
        if r.snapshots.iter().any(|t| !(*t >= 0.0 && *t <= r.t_end)) {
            return Err(ConfigError::field("snapshots", "must lie within [0, t_end]"));
        }
        if !(self.analysis.peak_threshold > 0.0 && self.analysis.peak_threshold < 1.0) {
            return Err(ConfigError::field("peak_threshold", "must lie in (0, 1)"));
        }
        for w in &self.analysis.phase_windows {
            if !(w[0] < w[1]) || w[0] < 0.0 || w[1] > r.t_end {
                return Err(ConfigError::field(
                    "phase_windows",
                    format!("window {w:?} must be increasing and inside [0, t_end]"),
                ));
            }
        }
        let g = &self.grid;
        if !(g.absorber >= 0.0 && g.absorber < 0.5) {
            return Err(ConfigError::field("absorber", "must lie in [0, 0.5)"));
        }
        if g.frame == FrameName::Fixed && g.absorber > 0.0 {
            return Err(ConfigError::field(
                "absorber",
                "only supported with frame = \"co_moving\"",
            ));
        }
        let p = self.sim_params()?;
        if g.amplitude_bound > 0.0 && g.frame == FrameName::Fixed {
            p.check_extent(g.amplitude_bound)?;
        }
        if self.init.spin == SpinName::Custom
            && !(self.init.spin_theta.is_finite() && self.init.spin_phi.is_finite())
        {
            return Err(ConfigError::field("spin_theta", "must be finite"));
        }
        if r.mode == Mode::Sweep {
            if self.sweep.run_mode == Mode::Sweep {
                return Err(ConfigError::field("run_mode", "a sweep cannot nest sweeps"));
            }
            for (i, sub) in self.expand_sweep()?.iter().enumerate() {
                sub.1
                    .validate()
                    .map_err(|e| ConfigError::field("sweep", format!("run {i}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec<f64>, ConfigError> {
        GridSpec::new(self.grid.z_min, self.grid.z_max, self.grid.n_points)
            .map_err(|e| ConfigError::field("grid", e.to_string()))
    }

    pub fn schedule(&self) -> Result<DriveSchedule<f64>, ConfigError> {
        let s = &self.schedule;
        let t_end = self.run.t_end;
        let cai = CaiParams {
            epsilon: self.model.epsilon,
            sweep_start: s.sweep_start,
            sweep_duration: s.sweep_duration,
            modulation: s.modulation,
        };
        if !(s.scale > 0.0) {
            return Err(ConfigError::field("scale", "must be positive"));
        }
        let cai = cai.scaled(s.scale);
        let sched = match s.kind {
            ScheduleName::Cai | ScheduleName::CaiRamped => {
                if !(s.sweep_duration > 0.0) {
                    return Err(ConfigError::field("sweep_duration", "must be positive"));
                }
                if s.kind == ScheduleName::Cai {
                    DriveSchedule::cai(&cai, t_end)?
                } else {
                    DriveSchedule::cai_ramped(&cai, s.ramp_duration, t_end)?
                }
            }
            ScheduleName::Rabi => DriveSchedule::rabi(t_end)?,
            ScheduleName::PiPulse => DriveSchedule::pi_pulse(s.pulse_first, s.pulse_spacing, t_end)?,
            ScheduleName::Constant => {
                DriveSchedule::constant(s.dphi_dtau * s.scale, cai.epsilon, t_end)?
            }
            ScheduleName::Custom => {
                let segs = s
                    .segments
                    .iter()
                    .enumerate()
                    .map(|(i, text)| parse_segment(text).map_err(|m| ConfigError::field("segments", format!("entry {i}: {m}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let sched = DriveSchedule::custom(segs)?;
                if sched.t_end() < t_end {
                    return Err(ConfigError::field(
                        "segments",
                        format!("cover only [0, {}] but t_end = {t_end}", sched.t_end()),
                    ));
                }
                sched
            }
        };
        Ok(sched)
    }

    pub fn sim_params(&self) -> Result<SimParams<f64>, ConfigError> {
        let schedule = self.schedule()?;
        let p = SimParams::new(
            self.model.epsilon,
            self.model.eta,
            schedule,
            self.run.t_end,
            self.grid_spec()?,
            self.run.dt,
        )?;
        Ok(p)
    }

    pub fn coherent(&self) -> CoherentInit<f64> {
        CoherentInit::new(Complex::new(self.init.alpha_re, self.init.alpha_im))
    }

    pub fn spin_init(&self) -> SpinInit<f64> {
        match self.init.spin {
            SpinName::Up => SpinInit::Up,
            SpinName::Down => SpinInit::Down,
            SpinName::PlusX => SpinInit::PlusX,
            SpinName::AlongEff => SpinInit::AlongEff,
            SpinName::OppositeEff => SpinInit::OppositeEff,
            SpinName::Custom => SpinInit::Custom {
                theta: self.init.spin_theta,
                phi: self.init.spin_phi,
            },
        }
    }

    pub fn propagator_options(&self) -> PropagatorOptions<f64> {
        PropagatorOptions {
            frame: match self.grid.frame {
                FrameName::Fixed => FrameMode::Fixed,
                FrameName::CoMoving => FrameMode::CoMoving,
            },
            absorber: (self.grid.absorber > 0.0).then_some(self.grid.absorber),
        }
    }

    /// Classical state matching the quantum initial condition: the coherent
    /// state's mean position and momentum and the Bloch vector of the spin
    /// state (length 1/2).
    pub fn classical_init(&self) -> Result<ClassicalState<f64>, ConfigError> {
        let p = self.sim_params()?;
        let c = self.coherent();
        let d = p.drive(0.0)?;
        let chi = self
            .spin_init()
            .spinor(&d)
            .map_err(|e| ConfigError::field("spin", e.to_string()))?;
        let r12 = chi[0] * chi[1].conj();
        let spin = [r12.re, -r12.im, (chi[0].norm_sqr() - chi[1].norm_sqr()) / 2.0];
        Ok(ClassicalState::new(c.mean_z(), c.mean_p(), spin))
    }

    /// Sampling interval of the time series.
    pub fn sample_dt(&self) -> f64 {
        std::f64::consts::TAU / self.run.samples_per_period as f64
    }

    /// Sample times `k · sample_dt` up to `t_end`, merged with the snapshot
    /// times.
    pub fn sample_times(&self) -> Vec<f64> {
        let dt = self.sample_dt();
        let mut out: Vec<f64> = (0..)
            .map(|k| k as f64 * dt)
            .take_while(|t| *t <= self.run.t_end)
            .collect();
        out.extend(self.run.snapshots.iter().copied());
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }

    /// Short hex digest of the canonical configuration text.
    /// Hash of everything except the `[output]` section, so relocated runs
    /// of the same parameters share it.
    pub fn param_hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        let digest = Sha256::digest(render(&c).as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Enumerates the sweep in a fixed order (η outermost, then ε, schedule,
    /// spin). Each entry carries a label used for its output directory.
    pub fn expand_sweep(&self) -> Result<Vec<(String, RunConfig)>, ConfigError> {
        let sw = &self.sweep;
        let or_base = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
        let etas = or_base(&sw.eta, self.model.eta);
        let eps = or_base(&sw.epsilon, self.model.epsilon);
        let scheds = if sw.schedule.is_empty() {
            vec![self.schedule.kind]
        } else {
            sw.schedule.clone()
        };
        let spins = if sw.spin.is_empty() {
            vec![self.init.spin]
        } else {
            sw.spin.clone()
        };
        let mut out = Vec::new();
        for eta in &etas {
            for e in &eps {
                for s in &scheds {
                    for sp in &spins {
                        let mut c = self.clone();
                        c.run.mode = sw.run_mode;
                        c.sweep = SweepSection::default();
                        c.model.eta = *eta;
                        c.model.epsilon = *e;
                        c.schedule.kind = *s;
                        c.init.spin = *sp;
                        let label = format!(
                            "run{:03}_eta{}_eps{}_{}_{}",
                            out.len(),
                            eta,
                            e,
                            name_of(s),
                            name_of(sp)
                        );
                        c.output.dir = self.output.dir.join(&label);
                        out.push((label, c));
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(ConfigError::field("sweep", "enumerates no runs"));
        }
        Ok(out)
    }

    pub fn schedule_kind(&self) -> ScheduleKind {
        match self.schedule.kind {
            ScheduleName::Cai => ScheduleKind::Cai,
            ScheduleName::CaiRamped => ScheduleKind::CaiRamped,
            ScheduleName::Rabi => ScheduleKind::Rabi,
            ScheduleName::PiPulse => ScheduleKind::PiPulse,
            ScheduleName::Constant | ScheduleName::Custom => ScheduleKind::CustomPiecewise,
        }
    }

    /// Unit Bloch vector of the initial spin.
    pub fn initial_bloch(&self) -> Result<[f64; 3], ConfigError> {
        let s = self.classical_init()?;
        Ok([s.spin[0] * 2.0, s.spin[1] * 2.0, s.spin[2] * 2.0])
    }
}

fn name_of<S: Serialize>(v: &S) -> String {
    toml::Value::try_from(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn parse_profile(text: &str, origin: f64) -> Result<Profile<f64>, String> {
    let mut words = text.split_whitespace();
    let head = words.next().ok_or("empty profile")?;
    let nums = words
        .map(|w| w.parse::<f64>().map_err(|_| format!("`{w}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    match head {
        "poly" if !nums.is_empty() => Ok(Profile::Polynomial {
            origin,
            coeffs: nums,
        }),
        "sin" if nums.len() == 4 => Ok(Profile::Sinusoid {
            origin,
            offset: nums[0],
            amplitude: nums[1],
            frequency: nums[2],
            phase: nums[3],
        }),
        "poly" => Err("`poly` needs at least one coefficient".into()),
        "sin" => Err("`sin` needs offset, amplitude, frequency and phase".into()),
        other => Err(format!("unknown profile `{other}` (expected poly or sin)")),
    }
}

fn parse_segment(text: &str) -> Result<Segment<f64>, String> {
    let parts: Vec<&str> = text.split('|').map(str::trim).collect();
    if parts.len() != 3 {
        return Err("expected `start end | dφ/dτ profile | ε profile`".into());
    }
    let bounds = parts[0]
        .split_whitespace()
        .map(|w| w.parse::<f64>().map_err(|_| format!("`{w}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if bounds.len() != 2 {
        return Err("interval needs a start and an end".into());
    }
    Ok(Segment {
        start: bounds[0],
        end: bounds[1],
        dphi: parse_profile(parts[1], bounds[0])?,
        epsilon: parse_profile(parts[2], bounds[0])?,
    })
}

/// Label of the configured initial spin.
pub fn describe_spin(cfg: &RunConfig) -> String {
    cfg.spin_init().name()
}
