//! Text serialization of snapshots, time series and plot data.
//!
//! Every file is UTF-8 text. Numbers are written with Rust's shortest
//! round-trip `{:e}` formatting, so values read back are bit-identical.

use crate::analysis::{
    angle_between, decompose, density, detect_peaks, observables, Decomposition, Observables,
    PeakSupport,
};
use crate::model::DriveSample;
use crate::quantum::{Frame, GridSpec, SpinorField};
use num_complex::Complex;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::config::PlotKind;

/// Units line shared by the delimited files.
pub const UNITS: &str = "dimensionless: tau in 1/omega_c, lengths in z0, densities per z0";

/// One spinor snapshot plus everything derived from it. The field is kept in
/// the laboratory frame, so a record can be re-analyzed on its own.
#[derive(Debug, Clone)]
pub struct SnapshotRecord {
    pub tau: f64,
    pub hash: String,
    pub drive: DriveSample<f64>,
    pub eta: f64,
    pub field: SpinorField<f64>,
    pub observables: Observables<f64>,
    pub peaks: Vec<PeakSupport<f64>>,
    pub decomposition: Option<Decomposition<f64>>,
}

/// Small-peak statistics of a record, when the density has split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSummary {
    pub w_big: f64,
    pub w_small: f64,
    pub kappa: Complex<f64>,
    pub kappa_residual: f64,
    /// Angle between the big-peak spin and `(ε, 0, -dφ/dτ)`.
    pub angle_big: f64,
    /// Angle between the small-peak spin and the reversed big-peak spin.
    pub angle_small: f64,
}

impl SnapshotRecord {
    pub fn from_state(
        state: &SpinorField<f64>,
        drive: DriveSample<f64>,
        eta: f64,
        hash: &str,
        threshold: f64,
    ) -> SnapshotRecord {
        let field = state.to_lab();
        let observables = observables(&field);
        let d = density(&field);
        let peaks = detect_peaks(&d.p, &d.z, threshold).unwrap_or_default();
        let decomposition = if peaks.is_empty() {
            None
        } else {
            decompose(&field, &peaks).ok()
        };
        SnapshotRecord {
            tau: state.tau,
            hash: hash.to_string(),
            drive,
            eta,
            field,
            observables,
            peaks,
            decomposition,
        }
    }

    pub fn split(&self) -> Option<SplitSummary> {
        let dec = self.decomposition.as_ref()?.split()?;
        let b0 = [self.drive.epsilon, 0.0, -self.drive.dphi_dtau];
        let big = dec.big.spin;
        Some(SplitSummary {
            w_big: dec.big.support.weight,
            w_small: dec.small.support.weight,
            kappa: dec.kappa_complex,
            kappa_residual: dec.kappa_residual,
            angle_big: angle_between(big, b0),
            angle_small: angle_between(dec.small.spin, [-big[0], -big[1], -big[2]]),
        })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.render())
    }

    pub fn render(&self) -> String {
        let o = &self.observables;
        let g = &self.field.grid;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "# {k} = {v}");
        };
        kv("tau", format!("{:e}", self.tau));
        kv("hash", self.hash.clone());
        kv("grid.z_min", format!("{:e}", g.z_min));
        kv("grid.z_max", format!("{:e}", g.z_max));
        kv("grid.n_points", g.n_points.to_string());
        kv("frame", "lab".into());
        kv("eta", format!("{:e}", self.eta));
        kv("drive.epsilon", format!("{:e}", self.drive.epsilon));
        kv("drive.dphi_dtau", format!("{:e}", self.drive.dphi_dtau));
        kv("drive.d2phi_dtau2", format!("{:e}", self.drive.d2phi_dtau2));
        kv("absorbed", format!("{:e}", self.field.absorbed));
        kv("norm", format!("{:e}", o.norm));
        kv("mean_z", format!("{:e}", o.mean_z));
        kv("std_z", format!("{:e}", o.std_z));
        kv("spin", format!("{:e} {:e} {:e}", o.spin_expect[0], o.spin_expect[1], o.spin_expect[2]));
        kv("pop_up", format!("{:e}", o.pop_up));
        kv("pop_down", format!("{:e}", o.pop_down));
        kv("peaks", self.peaks.len().to_string());
        if let Some(sp) = self.split() {
            kv("w_big", format!("{:e}", sp.w_big));
            kv("w_small", format!("{:e}", sp.w_small));
            kv("kappa", format!("{:e} {:e}", sp.kappa.re, sp.kappa.im));
            kv("kappa_residual", format!("{:e}", sp.kappa_residual));
            kv("angle_big", format!("{:e}", sp.angle_big));
            kv("angle_small", format!("{:e}", sp.angle_small));
        }
        s.push_str("z\tP\tP1\tP2\tre1\tim1\tre2\tim2\n");
        for i in 0..g.n_points {
            let (a, b) = (self.field.psi1[i], self.field.psi2[i]);
            let (p1, p2) = (a.norm_sqr(), b.norm_sqr());
            let _ = writeln!(
                s,
                "{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
                self.field.z(i),
                p1 + p2,
                p1,
                p2,
                a.re,
                a.im,
                b.re,
                b.im
            );
        }
        s
    }

    /// Reads a record written by [`SnapshotRecord::write`] and recomputes the
    /// derived quantities from the stored amplitudes.
    pub fn read(path: &Path, threshold: f64) -> Result<SnapshotRecord, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text, threshold).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str, threshold: f64) -> Result<SnapshotRecord, String> {
        let mut header = BTreeMap::new();
        let mut lines = text.lines();
        for line in lines.by_ref() {
            match line.strip_prefix("# ") {
                Some(rest) => {
                    let (k, v) = rest.split_once(" = ").ok_or("malformed header line")?;
                    header.insert(k.to_string(), v.to_string());
                }
                None => break,
            }
        }
        let num = |k: &str| -> Result<f64, String> {
            header
                .get(k)
                .ok_or(format!("missing header `{k}`"))?
                .parse::<f64>()
                .map_err(|e| format!("header `{k}`: {e}"))
        };
        let n: usize = header
            .get("grid.n_points")
            .ok_or("missing header `grid.n_points`")?
            .parse()
            .map_err(|e| format!("header `grid.n_points`: {e}"))?;
        let grid = GridSpec::new(num("grid.z_min")?, num("grid.z_max")?, n).map_err(|e| e.to_string())?;
        let tau = num("tau")?;
        let mut field = SpinorField::zeros(grid, tau);
        field.absorbed = num("absorbed")?;
        let mut rows = 0;
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            if i >= n {
                return Err(format!("more than {n} data rows"));
            }
            let v = line
                .split('\t')
                .map(|w| w.parse::<f64>().map_err(|e| format!("row {i}: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            if v.len() != 8 {
                return Err(format!("row {i}: expected 8 columns, found {}", v.len()));
            }
            field.psi1[i] = Complex::new(v[4], v[5]);
            field.psi2[i] = Complex::new(v[6], v[7]);
            rows += 1;
        }
        if rows != n {
            return Err(format!("expected {n} data rows, found {rows}"));
        }
        field.frame = Frame::identity();
        let drive = DriveSample {
            dphi_dtau: num("drive.dphi_dtau")?,
            epsilon: num("drive.epsilon")?,
            d2phi_dtau2: num("drive.d2phi_dtau2")?,
        };
        let hash = header.get("hash").cloned().unwrap_or_default();
        Ok(SnapshotRecord::from_state(&field, drive, num("eta")?, &hash, threshold))
    }
}

/// One time-series sample of a quantum run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeRow {
    pub obs: Observables<f64>,
    pub absorbed: f64,
    pub peaks: usize,
    pub w_big: f64,
    /// 0 while the density has a single peak.
    pub w_small: f64,
}

impl TimeRow {
    pub fn from_state(state: &SpinorField<f64>, threshold: f64) -> TimeRow {
        let obs = observables(state);
        let d = density(state);
        let peaks = detect_peaks(&d.p, &d.z, threshold).unwrap_or_default();
        TimeRow {
            obs,
            absorbed: state.absorbed,
            peaks: peaks.len(),
            w_big: peaks.first().map_or(0.0, |p| p.weight),
            w_small: peaks.get(1).map_or(0.0, |p| p.weight),
        }
    }
}

pub fn write_quantum_series(path: &Path, rows: &[TimeRow]) -> io::Result<()> {
    let mut s = format!("# {UNITS}\n");
    s.push_str("tau\tmean_z\tstd_z\tsx\tsy\tsz\tpop_up\tpop_down\tnorm\tabsorbed\tpeaks\tw_big\tw_small\n");
    for r in rows {
        let o = &r.obs;
        let _ = writeln!(
            s,
            "{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{}\t{:e}\t{:e}",
            o.tau,
            o.mean_z,
            o.std_z,
            o.spin_expect[0],
            o.spin_expect[1],
            o.spin_expect[2],
            o.pop_up,
            o.pop_down,
            o.norm,
            r.absorbed,
            r.peaks,
            r.w_big,
            r.w_small
        );
    }
    fs::write(path, s)
}

/// Writes the plot-ready files of `kind` into `dir` and returns their paths.
///
/// * `DensityPanels`: one file per snapshot, columns `z P P1 P2`.
/// * `Trajectory`: `tau mean_z std_z` from the time series.
/// * `Decomposition`: one row per split snapshot.
pub fn emit_plot_data(
    snapshots: &[SnapshotRecord],
    series: &[TimeRow],
    kind: PlotKind,
    dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    match kind {
        PlotKind::DensityPanels => {
            for (k, r) in snapshots.iter().enumerate() {
                let path = dir.join(format!("density_{k:02}.tsv"));
                let mut s = format!("# tau = {:e}; {UNITS}\n", r.tau);
                s.push_str("z\tP\tP1\tP2\n");
                let d = density(&r.field);
                for i in 0..d.z.len() {
                    let _ = writeln!(s, "{:e}\t{:e}\t{:e}\t{:e}", d.z[i], d.p[i], d.p1[i], d.p2[i]);
                }
                fs::write(&path, s)?;
                out.push(path);
            }
        }
        PlotKind::Trajectory => {
            let path = dir.join("trajectory.tsv");
            let mut s = format!("# {UNITS}\ntau\tmean_z\tstd_z\n");
            let rows: Vec<Observables<f64>> = if series.is_empty() {
                snapshots.iter().map(|r| r.observables).collect()
            } else {
                series.iter().map(|r| r.obs).collect()
            };
            for o in rows {
                let _ = writeln!(s, "{:e}\t{:e}\t{:e}", o.tau, o.mean_z, o.std_z);
            }
            fs::write(&path, s)?;
            out.push(path);
        }
        PlotKind::Decomposition => {
            let path = dir.join("decomposition.tsv");
            let mut s = format!("# angles in rad; {UNITS}\n");
            s.push_str("tau\tw_big\tw_small\tkappa\tkappa_residual\tangle\n");
            for r in snapshots {
                if let Some(sp) = r.split() {
                    let _ = writeln!(
                        s,
                        "{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
                        r.tau, sp.w_big, sp.w_small, sp.kappa.re, sp.kappa_residual, sp.angle_big
                    );
                }
            }
            fs::write(&path, s)?;
            out.push(path);
        }
    }
    Ok(out)
}

/// Snapshot files in `dir`, ordered by name.
pub fn snapshot_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "snap"))
        .collect();
    v.sort();
    Ok(v)
}

pub fn snapshot_name(k: usize, tau: f64) -> String {
    format!("snap_{k:03}_tau{tau:.4}.snap")
}
