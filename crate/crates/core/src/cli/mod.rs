//! Configuration-driven runs: quantum, classical, correspondence and sweeps.

pub mod config;
pub mod output;

pub use config::{parse_config, render, ConfigError, Mode, PlotKind, RunConfig};
pub use output::{emit_plot_data, SnapshotRecord, TimeRow};

use crate::analysis::{fit_phase, period_envelope, PhaseFit};
use crate::classical::{integrate_with, ClassicalError, Tolerances, Trajectory};
use crate::quantum::{init_state, QuantumError, SplitStep};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("analysis failed: {0}")]
    Analysis(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(io_err(path))
}

fn mkdir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Outcome of one run, as listed in a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub mode: Mode,
    pub hash: String,
    pub t_end: f64,
    /// Largest `|⟨z⟩|` (or `|z|`) over the last complete period.
    pub final_envelope: f64,
    /// First sample with two detected peaks (quantum runs).
    pub first_split: Option<f64>,
    /// Small/big weight at the last snapshot that showed two peaks.
    pub weight_ratio: Option<f64>,
    pub phase_fits: Vec<PhaseFit<f64>>,
}

impl RunSummary {
    fn render(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:e}"));
        let _ = writeln!(s, "mode = {}", mode_name(self.mode));
        let _ = writeln!(s, "hash = {}", self.hash);
        let _ = writeln!(s, "t_end = {:e}", self.t_end);
        let _ = writeln!(s, "final_envelope = {:e}", self.final_envelope);
        let _ = writeln!(s, "first_split = {}", opt(self.first_split));
        let _ = writeln!(s, "weight_ratio = {}", opt(self.weight_ratio));
        for f in &self.phase_fits {
            let _ = writeln!(
                s,
                "phase_fit = {:e} {:e} amplitude {:e} phase {:e} drift {:e} relative_residual {:e}{}",
                f.window.0,
                f.window.1,
                f.amplitude,
                f.phase,
                f.drift,
                f.relative_residual,
                if f.is_flagged() { " flagged" } else { "" }
            );
        }
        s
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Quantum => "quantum",
        Mode::Classical => "classical",
        Mode::Correspondence => "correspondence",
        Mode::Sweep => "sweep",
    }
}

/// Everything produced by a quantum run.
#[derive(Debug, Clone)]
pub struct QuantumRun {
    pub series: Vec<TimeRow>,
    pub snapshots: Vec<SnapshotRecord>,
    pub steps: u64,
}

/// Propagates the configured state, sampling observables on the
/// configured time grid and recording snapshots. Writes nothing.
pub fn simulate_quantum(cfg: &RunConfig) -> Result<QuantumRun, RunError> {
    let p = cfg.sim_params()?;
    let hash = cfg.param_hash();
    let threshold = cfg.analysis.peak_threshold;
    let mut state = init_state(&p.grid, &cfg.coherent(), &cfg.spin_init(), &p)?;
    let mut prop = SplitStep::new(p.grid, cfg.propagator_options())?;
    let stops = cfg.sample_times();
    let mut wanted = cfg.run.snapshots.iter().copied().peekable();
    let mut series = Vec::with_capacity(stops.len());
    let mut snapshots = Vec::new();
    let mut failure = None;
    prop.propagate_observed(&mut state, &p, cfg.run.t_end, &stops, |s| {
        series.push(TimeRow::from_state(s, threshold));
        while wanted.peek().is_some_and(|t| *t <= s.tau) {
            wanted.next();
            match p.drive(s.tau) {
                Ok(d) => {
                    log::info!("snapshot at tau = {}", s.tau);
                    snapshots.push(SnapshotRecord::from_state(s, d, p.eta, &hash, threshold))
                }
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(QuantumError::from(e).into());
    }
    Ok(QuantumRun {
        series,
        snapshots,
        steps: prop.steps_taken(),
    })
}

/// Classical trajectory sampled every `cfg.sample_dt()`.
pub fn simulate_classical(cfg: &RunConfig) -> Result<Trajectory<f64>, RunError> {
    let p = cfg.sim_params()?;
    let init = cfg.classical_init()?;
    let tol = Tolerances {
        rtol: cfg.run.rtol,
        atol: cfg.run.rtol * 1e-2,
        ..Tolerances::default()
    };
    Ok(integrate_with(&init, &p, 0.0, cfg.run.t_end, cfg.sample_dt(), &tol)?)
}

fn phase_fits(cfg: &RunConfig, series: &[(f64, f64)]) -> Result<Vec<PhaseFit<f64>>, RunError> {
    cfg.analysis
        .phase_windows
        .iter()
        .map(|w| fit_phase(series, (w[0], w[1])).map_err(|e| RunError::Analysis(e.to_string())))
        .collect()
}

fn last_envelope(series: &[(f64, f64)]) -> f64 {
    // runs shorter than a period report the largest excursion instead
    period_envelope(series)
        .last()
        .map_or_else(|| series.iter().fold(0.0, |m, s| s.1.abs().max(m)), |e| e.1)
}

fn mean_z_series(q: &QuantumRun) -> Vec<(f64, f64)> {
    q.series.iter().map(|r| (r.obs.tau, r.obs.mean_z)).collect()
}

fn write_quantum(cfg: &RunConfig, q: &QuantumRun, dir: &Path) -> Result<RunSummary, RunError> {
    mkdir(dir)?;
    let ts = dir.join("timeseries.tsv");
    output::write_quantum_series(&ts, &q.series).map_err(io_err(&ts))?;
    if cfg.output.snapshots && !q.snapshots.is_empty() {
        let sd = dir.join("snapshots");
        mkdir(&sd)?;
        for (k, r) in q.snapshots.iter().enumerate() {
            let path = sd.join(output::snapshot_name(k, r.tau));
            r.write(&path).map_err(io_err(&path))?;
        }
    }
    let plots = dir.join("plots");
    for kind in &cfg.output.plots {
        emit_plot_data(&q.snapshots, &q.series, *kind, &plots).map_err(io_err(&plots))?;
    }
    let series = mean_z_series(q);
    let summary = RunSummary {
        label: String::new(),
        mode: Mode::Quantum,
        hash: cfg.param_hash(),
        t_end: cfg.run.t_end,
        final_envelope: last_envelope(&series),
        first_split: q.series.iter().find(|r| r.peaks >= 2).map(|r| r.obs.tau),
        weight_ratio: q
            .snapshots
            .iter()
            .rev()
            .find_map(|r| r.split().map(|s| s.w_small / s.w_big)),
        phase_fits: phase_fits(cfg, &series)?,
    };
    let mut text = summary.render();
    let _ = writeln!(text, "steps = {}", q.steps);
    for r in &q.snapshots {
        match r.split() {
            Some(sp) => {
                let _ = writeln!(
                    text,
                    "kappa = {:e} {:e} {:e} residual {:e} ratio {:e}",
                    r.tau,
                    sp.kappa.re,
                    sp.kappa.im,
                    sp.kappa_residual,
                    sp.w_small / sp.w_big
                );
            }
            None => {
                let _ = writeln!(text, "kappa = {:e} single", r.tau);
            }
        }
    }
    write(&dir.join("summary.txt"), &text)?;
    Ok(summary)
}

fn write_classical(
    cfg: &RunConfig,
    traj: &Trajectory<f64>,
    dir: &Path,
) -> Result<RunSummary, RunError> {
    mkdir(dir)?;
    let mut s = format!("# {}\ntau\tz\tp\tsx\tsy\tsz\n", output::UNITS);
    for (t, st) in traj.taus.iter().zip(&traj.states) {
        let _ = writeln!(
            s,
            "{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
            t, st.z, st.p, st.spin[0], st.spin[1], st.spin[2]
        );
    }
    write(&dir.join("timeseries.tsv"), &s)?;
    let series = traj.z_series();
    let summary = RunSummary {
        label: String::new(),
        mode: Mode::Classical,
        hash: cfg.param_hash(),
        t_end: cfg.run.t_end,
        final_envelope: last_envelope(&series),
        first_split: None,
        weight_ratio: None,
        phase_fits: phase_fits(cfg, &series)?,
    };
    write(&dir.join("summary.txt"), &summary.render())?;
    Ok(summary)
}

/// Per-sample comparison of quantum `⟨z⟩` and classical `z` with the
/// relative deviation of their one-period envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondenceRow {
    pub tau: f64,
    pub quantum: f64,
    pub classical: f64,
    pub env_quantum: f64,
    pub env_classical: f64,
    pub rel_deviation: f64,
    pub w_small: f64,
}

pub fn correspondence(q: &QuantumRun, c: &Trajectory<f64>) -> Vec<CorrespondenceRow> {
    let qs = mean_z_series(q);
    let cs = c.z_series();
    let t0 = qs.first().map_or(0.0, |x| x.0);
    let eq = period_envelope(&qs);
    let ec = period_envelope(&cs);
    let period = |t: f64| ((t - t0) / std::f64::consts::TAU).floor() as usize;
    let mut out = Vec::new();
    let mut j = 0;
    for (r, (t, zq)) in q.series.iter().zip(&qs) {
        // classical samples sit on k·dt; skip snapshot-only quantum samples
        while j < cs.len() && cs[j].0 < *t - 1e-9 * t.abs().max(1.0) {
            j += 1;
        }
        if j == cs.len() || (cs[j].0 - t).abs() > 1e-9 * t.abs().max(1.0) {
            continue;
        }
        let k = period(*t);
        let (a, b) = (
            eq.get(k).map_or(f64::NAN, |e| e.1),
            ec.get(k).map_or(f64::NAN, |e| e.1),
        );
        out.push(CorrespondenceRow {
            tau: *t,
            quantum: *zq,
            classical: cs[j].1,
            env_quantum: a,
            env_classical: b,
            rel_deviation: (a - b).abs() / b.abs(),
            w_small: r.w_small,
        });
    }
    out
}

/// Runs `cfg` and writes its outputs below `cfg.output.dir`.
pub fn run(cfg: &RunConfig, workers: usize) -> Result<Vec<RunSummary>, RunError> {
    let dir = cfg.output.dir.clone();
    mkdir(&dir)?;
    write(&dir.join("effective.toml"), &render(cfg))?;
    match cfg.run.mode {
        Mode::Quantum => {
            let q = simulate_quantum(cfg)?;
            Ok(vec![write_quantum(cfg, &q, &dir)?])
        }
        Mode::Classical => {
            let c = simulate_classical(cfg)?;
            Ok(vec![write_classical(cfg, &c, &dir)?])
        }
        Mode::Correspondence => {
            let q = simulate_quantum(cfg)?;
            let c = simulate_classical(cfg)?;
            let sq = write_quantum(cfg, &q, &dir.join("quantum"))?;
            let sc = write_classical(cfg, &c, &dir.join("classical"))?;
            let mut s = format!("# {}\n", output::UNITS);
            s.push_str("tau\tmean_z_quantum\tz_classical\tenvelope_quantum\tenvelope_classical\tenvelope_rel_deviation\tw_small\n");
            for r in correspondence(&q, &c) {
                let _ = writeln!(
                    s,
                    "{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
                    r.tau, r.quantum, r.classical, r.env_quantum, r.env_classical, r.rel_deviation, r.w_small
                );
            }
            write(&dir.join("correspondence.tsv"), &s)?;
            Ok(vec![sq, sc])
        }
        Mode::Sweep => sweep(cfg, workers),
    }
}

/// Runs every point of the sweep on up to `workers` threads. Each run
/// writes to its own subdirectory; the combined table is `summary.tsv`.
pub fn sweep(cfg: &RunConfig, workers: usize) -> Result<Vec<RunSummary>, RunError> {
    let runs = cfg.expand_sweep()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Analysis(e.to_string()))?;
    let results: Vec<Result<Vec<RunSummary>, RunError>> = pool.install(|| {
        runs.par_iter()
            .map(|(label, sub)| {
                log::info!("sweep run {label}");
                run(sub, 1).map(|v| {
                    v.into_iter()
                        .map(|mut s| {
                            s.label = label.clone();
                            s
                        })
                        .collect()
                })
            })
            .collect()
    });
    let mut table = String::from(
        "label\tmode\teta\tepsilon\tschedule\tspin\thash\tfinal_envelope\tfirst_split\tweight_ratio\tstatus\n",
    );
    let mut all = Vec::new();
    let mut first_err = None;
    for ((label, sub), res) in runs.iter().zip(results) {
        let fmt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:e}"));
        let head = format!(
            "{label}\t{}\t{:e}\t{:e}\t{}\t{}",
            mode_name(sub.run.mode),
            sub.model.eta,
            sub.model.epsilon,
            sub.schedule_kind().name(),
            config::describe_spin(sub)
        );
        match res {
            Ok(summaries) => {
                for s in summaries {
                    let _ = writeln!(
                        table,
                        "{head}\t{}\t{:e}\t{}\t{}\tok",
                        s.hash,
                        s.final_envelope,
                        fmt(s.first_split),
                        fmt(s.weight_ratio)
                    );
                    all.push(s);
                }
            }
            Err(e) => {
                let _ = writeln!(table, "{head}\t{}\tnan\tnone\tnone\terror: {e}", sub.param_hash());
                first_err.get_or_insert(e);
            }
        }
    }
    write(&cfg.output.dir.join("summary.tsv"), &table)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(all),
    }
}

/// Re-analyzes the snapshot files in `dir`, writing `analysis.tsv` and the
/// plot files into `out`.
pub fn analyze(dir: &Path, out: &Path, threshold: f64) -> Result<Vec<SnapshotRecord>, RunError> {
    let files = output::snapshot_files(dir).map_err(io_err(dir))?;
    let records = files
        .iter()
        .map(|f| SnapshotRecord::read(f, threshold).map_err(RunError::Analysis))
        .collect::<Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(RunError::Analysis(format!("no .snap files in {}", dir.display())));
    }
    mkdir(out)?;
    let mut s = String::from(
        "tau\thash\tnorm\tmean_z\tstd_z\tpeaks\tw_big\tw_small\tkappa_re\tkappa_im\tkappa_residual\tangle_big\tangle_small\n",
    );
    for r in &records {
        let o = &r.observables;
        let _ = write!(s, "{:e}\t{}\t{:e}\t{:e}\t{:e}\t{}", r.tau, r.hash, o.norm, o.mean_z, o.std_z, r.peaks.len());
        match r.split() {
            Some(sp) => {
                let _ = writeln!(
                    s,
                    "\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
                    sp.w_big, sp.w_small, sp.kappa.re, sp.kappa.im, sp.kappa_residual, sp.angle_big, sp.angle_small
                );
            }
            None => s.push_str("\tnan\tnan\tnan\tnan\tnan\tnan\tnan\n"),
        }
    }
    write(&out.join("analysis.tsv"), &s)?;
    for kind in [PlotKind::DensityPanels, PlotKind::Trajectory, PlotKind::Decomposition] {
        emit_plot_data(&records, &[], kind, out).map_err(io_err(out))?;
    }
    Ok(records)
}
