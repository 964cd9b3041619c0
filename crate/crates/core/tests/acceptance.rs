//! Acceptance suite. Prints one line per criterion.
//!
//! Criteria listed in `KNOWN_FAILING` are evaluated in full and reported as
//! FAIL, but do not fail the process; any other failure does.

use mrfm_sim::analysis::*;
use mrfm_sim::classical::{integrate_with, ClassicalState, Tolerances};
use mrfm_sim::cli::config::SpinName;
use mrfm_sim::cli::{correspondence, parse_config, simulate_classical, simulate_quantum, Mode, RunConfig};
use mrfm_sim::model::{
    effective_field, CaiParams, DriveSchedule, Profile, Segment, SimParams,
};
use mrfm_sim::quantum::*;
use num_complex::Complex;
use std::f64::consts::{PI, SQRT_2, TAU};
use std::path::PathBuf;
use std::time::Instant;

const KNOWN_FAILING: &[&str] = &["1-scaled", "5", "6"];

struct Report {
    rows: Vec<(String, bool)>,
}

impl Report {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        let known = KNOWN_FAILING.contains(&id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:<9} {tag:<12} {detail}");
        self.rows.push((id.to_string(), pass));
    }

    fn error(&mut self, id: &str, e: impl std::fmt::Display) {
        self.record(id, false, format!("error: {e}"));
    }
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(name: &str) -> RunConfig {
    let text = std::fs::read_to_string(configs().join(name)).expect("shipped config");
    parse_config(&text).expect("valid shipped config")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Tilt between the initial spin (up) and the effective field at the
/// starting position of the cantilever.
fn initial_tilt(cfg: &RunConfig) -> f64 {
    let p = cfg.sim_params().unwrap();
    let b = effective_field(&p, 0.0, cfg.coherent().mean_z()).unwrap();
    angle_between([0.0, 0.0, 1.0], b.as_array())
}

fn formation(r: &mut Report) {
    // dt = 1e-4 (see the convergence line); 4096 points keep the relative
    // momentum of the two packets (up to twice the envelope) below Nyquist
    let mut cfg = shipped("fig2.cfg");
    cfg.grid.n_points = 4096;
    cfg.run.t_end = 300.0;
    cfg.run.dt = 1e-4;
    cfg.run.samples_per_period = 64;
    cfg.run.snapshots = (0..=120).map(|k| 40.0 + 0.5 * k as f64).collect();
    cfg.analysis.phase_windows.clear();
    cfg.validate().unwrap();
    let start = Instant::now();
    let q = match simulate_quantum(&cfg) {
        Ok(q) => q,
        Err(e) => {
            for id in ["1", "2-paper", "4", "6"] {
                r.error(id, &e);
            }
            return;
        }
    };
    let secs = start.elapsed().as_secs_f64();

    // 1: first split, peak count, weight ratio while both peaks are on the grid
    let first = q.series.iter().find(|row| row.peaks == 2).map(|row| row.obs.tau);
    // the absorber cuts the small packet into pieces once it leaves the window
    let on_grid = |row: &&mrfm_sim::cli::TimeRow| row.absorbed < 1e-6;
    let max_peaks = q.series.iter().filter(on_grid).map(|row| row.peaks).max().unwrap_or(0);
    let max_any = q.series.iter().map(|row| row.peaks).max().unwrap_or(0);
    let t_absorb = q.series.iter().find(|row| !on_grid(row)).map_or(f64::NAN, |row| row.obs.tau);
    let ratios: Vec<f64> = q
        .series
        .iter()
        .filter(|row| row.peaks == 2 && on_grid(row))
        .map(|row| row.w_small / row.w_big)
        .collect();
    let ratio = median(ratios.clone());
    let ok = first.is_some_and(|t| (35.0..=45.0).contains(&t))
        && max_peaks == 2
        && (3e-4..=3e-3).contains(&ratio);
    r.record(
        "1",
        ok,
        format!(
            "first split at tau = {}, at most {max_peaks} peaks before absorption starts at tau = {t_absorb:.1} ({max_any} after), median small/big = {ratio:.3e} over {} samples (want tau in [35, 45], 2 peaks, ratio in [3e-4, 3e-3]; {secs:.0} s)",
            first.map_or("none".into(), |t| format!("{t:.2}")),
            ratios.len()
        ),
    );

    // 2 (schedule clause): the same ratio against tan²(Θ/2)
    let theta = initial_tilt(&cfg);
    let law = tilt_branching(theta);
    r.record(
        "2-paper",
        ratio / law <= 3.0 && law / ratio <= 3.0,
        format!("Theta = {theta:.4}, tan^2(Theta/2) = {law:.3e}, measured {ratio:.3e} (ratio {:.3})", ratio / law),
    );

    // 4: structure of the split state at every snapshot showing two peaks
    let splits: Vec<_> = q.snapshots.iter().filter_map(|s| s.split().map(|sp| (s.tau, sp))).collect();
    let worst = |f: &dyn Fn(&mrfm_sim::cli::output::SplitSummary) -> f64| {
        splits.iter().map(|(t, sp)| (f(sp), *t)).fold((0.0, f64::NAN), |a, b| if b.0 > a.0 { b } else { a })
    };
    let (res, t_res) = worst(&|sp| sp.kappa_residual);
    let (ab, t_ab) = worst(&|sp| sp.angle_big);
    let (asm, t_as) = worst(&|sp| sp.angle_small);
    r.record(
        "4",
        !splits.is_empty() && res <= 0.02 && ab <= 0.05 && asm <= 0.05,
        format!(
            "{} split snapshots in [40, 100]; worst kappa_residual {res:.2e} (tau {t_res}), angle_big {ab:.2e} (tau {t_ab}), angle_small {asm:.2e} (tau {t_as}) (want <= 0.02, 0.05, 0.05)",
            splits.len()
        ),
    );

    // 6: amplification with a narrow packet
    let zs: Vec<(f64, f64)> = q.series.iter().map(|row| (row.obs.tau, row.obs.mean_z)).collect();
    let env = period_envelope(&zs);
    let drops: Vec<(f64, f64, f64)> = env
        .windows(2)
        .filter(|w| w[1].1 < w[0].1)
        .map(|w| (w[1].0, w[0].1, w[1].1))
        .collect();
    let final_env = env.last().map_or(0.0, |e| e.1);
    let period = |t: f64| ((t - zs[0].0) / TAU).floor() as usize;
    let mut worst_std = (0.0f64, f64::NAN);
    for row in &q.series {
        if let Some(e) = env.get(period(row.obs.tau)) {
            if e.1 > 30.0 {
                let rel = row.obs.std_z / e.1;
                if rel > worst_std.0 {
                    worst_std = (rel, row.obs.tau);
                }
            }
        }
    }
    let absorbed = q.series.last().map_or(0.0, |row| row.absorbed);
    let biggest_drop = drops
        .iter()
        .fold((f64::NAN, 0.0, 0.0), |a, d| if d.1 - d.2 > a.1 - a.2 || a.0.is_nan() { *d } else { a });
    r.record(
        "6",
        drops.is_empty() && env.first().is_some_and(|e| e.1 >= 19.0) && final_env >= 40.0 && worst_std.0 < 0.1,
        format!(
            "envelope {:.2} -> {final_env:.2} over {} periods, {} decreasing periods{}; max std_z/envelope beyond 30 = {:.3} (tau {:.1}); absorbed {absorbed:.1e}",
            env.first().map_or(f64::NAN, |e| e.1),
            env.len(),
            drops.len(),
            if drops.is_empty() {
                String::new()
            } else {
                format!(" (largest {:.2} -> {:.2} at tau {:.1})", biggest_drop.1, biggest_drop.2, biggest_drop.0)
            },
            worst_std.0,
            worst_std.1
        ),
    );
}

fn scaled_and_correspondence(r: &mut Report) {
    let cfg = shipped("scaled.cfg");
    let start = Instant::now();
    let q = match simulate_quantum(&cfg) {
        Ok(q) => q,
        Err(e) => {
            r.error("1-scaled", &e);
            r.error("9", &e);
            return;
        }
    };
    let secs = start.elapsed().as_secs_f64();
    let ratio = median(
        q.series
            .iter()
            .filter(|row| row.peaks == 2 && row.absorbed < 1e-6)
            .map(|row| row.w_small / row.w_big)
            .collect(),
    );
    let law = tilt_branching(initial_tilt(&cfg));
    let factor = (ratio / law).max(law / ratio);
    r.record(
        "1-scaled",
        factor <= 3.0 && secs < 60.0,
        format!("small/big = {ratio:.3e} vs tan^2(Theta/2) = {law:.3e}: factor {factor:.2} (want <= 3); {secs:.0} s (want < 60)"),
    );

    let mut ccfg = cfg.clone();
    ccfg.run.mode = Mode::Classical;
    ccfg.run.rtol = 1e-10;
    let c = match simulate_classical(&ccfg) {
        Ok(c) => c,
        Err(e) => return r.error("9", e),
    };
    let rows = correspondence(&q, &c);
    let eligible: Vec<_> = rows.iter().filter(|row| row.w_small < 1e-2 && row.rel_deviation.is_finite()).collect();
    let worst = eligible.iter().fold((0.0f64, f64::NAN), |a, row| {
        if row.rel_deviation > a.0 {
            (row.rel_deviation, row.tau)
        } else {
            a
        }
    });
    r.record(
        "9",
        !eligible.is_empty() && worst.0 <= 0.02,
        format!(
            "scaled drive, tau <= {}: worst envelope deviation {:.2e} at tau {:.1} over {} samples with w_small < 1e-2 (want <= 0.02)",
            cfg.run.t_end,
            worst.0,
            worst.1,
            eligible.len()
        ),
    );
}

fn static_branching(r: &mut Report) {
    let grid = GridSpec::symmetric(16.0, 256).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for theta in [0.05f64, 0.1, 0.3] {
        let s = DriveSchedule::constant(-1000.0, 0.0, 2.0).unwrap();
        let p = SimParams::new(400.0, 0.0, s, 2.0, grid, 1e-4).unwrap();
        let psi = init_state(&grid, &CoherentInit::real(0.0), &SpinInit::Custom { theta, phi: 0.0 }, &p).unwrap();
        let (end, _) = propagate(&psi, &p, 2.0, &[]).unwrap();
        let got = spin_branching(&end, [0.0, 0.0, 1.0]);
        let rel = (got / tilt_branching(theta) - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!("{theta}: {got:.4e}"));
    }
    r.record(
        "2-static",
        worst <= 0.05,
        format!("ratio at Theta = {}; worst relative error vs tan^2(Theta/2) {worst:.1e} (want <= 0.05)", parts.join(", ")),
    );
}

fn ramp(r: &mut Report) {
    let mut cfg = shipped("ramp.cfg");
    cfg.run.dt = 1e-4;
    cfg.run.snapshots.clear();
    cfg.validate().unwrap();
    let q = match simulate_quantum(&cfg) {
        Ok(q) => q,
        Err(e) => return r.error("3", e),
    };
    let late: Vec<f64> = q
        .series
        .iter()
        .filter(|row| row.obs.tau >= 40.0 && row.peaks == 2 && row.absorbed < 1e-6)
        .map(|row| row.w_small)
        .collect();
    let w = median(late.clone());
    r.record(
        "3",
        !late.is_empty() && w <= 1e-5 && (1e-8..=1e-4).contains(&w),
        format!("median small-peak weight over {} split samples in [40, 60] = {w:.2e} (want <= 1e-5 and in [1e-8, 1e-4])", late.len()),
    );
}

fn phase_readout(r: &mut Report) {
    let t_end = 1500.0;
    let window = (t_end - 6.0 * PI, t_end);
    let mut phases = Vec::new();
    for spin in [SpinName::AlongEff, SpinName::OppositeEff] {
        let mut cfg = shipped("fig2.cfg");
        cfg.run.mode = Mode::Classical;
        cfg.run.t_end = t_end;
        cfg.run.snapshots.clear();
        cfg.init.spin = spin;
        cfg.analysis.phase_windows = vec![[window.0, window.1]];
        cfg.validate().unwrap();
        let fit = simulate_classical(&cfg)
            .map_err(|e| e.to_string())
            .and_then(|tr| fit_phase(&tr.z_series(), window).map_err(|e| e.to_string()));
        match fit {
            Ok(f) => phases.push(f),
            Err(e) => return r.error("5", e),
        }
    }
    let d = phase_separation(phases[0].phase, phases[1].phase);
    r.record(
        "5",
        (PI - 0.15..=PI).contains(&d) && !phases.iter().any(|f| f.is_flagged()),
        format!(
            "window [{:.2}, {:.0}]: phase along {:.4}, opposite {:.4}, difference {d:.4} (want in [{:.4}, {:.4}]); amplitudes {:.1} / {:.1}",
            window.0,
            window.1,
            phases[0].phase,
            phases[1].phase,
            PI - 0.15,
            PI,
            phases[0].amplitude,
            phases[1].amplitude
        ),
    );
}

fn oracle(r: &mut Report) {
    let grid = GridSpec::symmetric(16.0, 512).unwrap();
    let seg = |t_end: f64, dphi: Profile<f64>, eps: f64| {
        DriveSchedule::custom(vec![Segment {
            start: 0.0,
            end: t_end,
            dphi,
            epsilon: Profile::constant(eps),
        }])
        .unwrap()
    };
    let cases: Vec<(Complex<f64>, SpinInit<f64>, f64, f64, DriveSchedule<f64>)> = vec![
        (Complex::new(-2.0, 0.0), SpinInit::Up, 5.0, 0.3, seg(2.0, Profile::linear(0.0, -20.0, 1.0), 5.0)),
        (Complex::new(3.0, 0.0), SpinInit::Up, 10.0, 0.5, seg(5.0, Profile::constant(-40.0), 10.0)),
        (Complex::new(1.0, 1.0), SpinInit::PlusX, 2.0, 0.2, seg(5.0, Profile::sinusoid(0.0, 40.0, 1.0), 2.0)),
        (Complex::new(0.0, 0.0), SpinInit::AlongEff, 10.0, 1.0, seg(5.0, Profile::linear(0.0, 30.0, -6.0), 10.0)),
    ];
    let mut worst = f64::INFINITY;
    let start = Instant::now();
    for (alpha, spin, eps, eta, s) in cases {
        let t = s.t_end();
        let p = SimParams::new(eps, eta, s, t, grid, 1e-4).unwrap();
        let c = CoherentInit::new(alpha);
        let fid = init_state(&grid, &c, &spin, &p)
            .and_then(|psi| propagate(&psi, &p, t, &[]))
            .and_then(|(end, _)| {
                let o = oracle_propagate_fock(&c, &spin, &p, 80, t)?;
                end.fidelity(&o)
            });
        match fid {
            Ok(f) => worst = worst.min(f),
            Err(e) => return r.error("7", e),
        }
    }
    r.record(
        "7",
        worst > 1.0 - 1e-6,
        format!("4 parameter sets, worst 1 - fidelity {:.1e} (want < 1e-6; {:.1} s)", (1.0 - worst).abs(), start.elapsed().as_secs_f64()),
    );
}

/// `v` rotated by `angle` about unit axis `n`.
fn rotate(v: [f64; 3], n: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let cross = [n[1] * v[2] - n[2] * v[1], n[2] * v[0] - n[0] * v[2], n[0] * v[1] - n[1] * v[0]];
    let dot = n[0] * v[0] + n[1] * v[1] + n[2] * v[2];
    [0, 1, 2].map(|k| v[k] * c + cross[k] * s + n[k] * dot * (1.0 - c))
}

fn analytic_limits(r: &mut Report) {
    let grid = GridSpec::symmetric(24.0, 1024).unwrap();
    let stops: Vec<f64> = (1..=40).map(|k| k as f64 * 0.1).collect();

    // η = 0: coherent motion and Rabi precession about (ε, 0, -dφ/dτ)
    let (eps, dphi) = (50.0f64, -300.0f64);
    let p = SimParams::new(eps, 0.0, DriveSchedule::constant(dphi, eps, 4.0).unwrap(), 4.0, grid, 1e-4).unwrap();
    let alpha = Complex::new(2.0, 1.0);
    let mut psi = init_state(&grid, &CoherentInit::new(alpha), &SpinInit::Up, &p).unwrap();
    let mut prop = SplitStep::new(grid, PropagatorOptions::default()).unwrap();
    let bn = (eps * eps + dphi * dphi).sqrt();
    let axis = [eps / bn, 0.0, -dphi / bn];
    let (mut motion, mut rabi) = (0.0f64, 0.0f64);
    prop.propagate_observed(&mut psi, &p, 4.0, &stops, |s| {
        let o = observables(s);
        let z = SQRT_2 * (alpha * Complex::from_polar(1.0, -s.tau)).re;
        motion = motion.max((o.mean_z - z).abs()).max((o.std_z - 0.5f64.sqrt()).abs());
        let expect = rotate([0.0, 0.0, 0.5], axis, -bn * s.tau);
        for k in 0..3 {
            rabi = rabi.max((o.spin_expect[k] - expect[k]).abs());
        }
    })
    .unwrap();

    // ε = 0: oscillator displaced by the spin force, populations frozen
    let eta = 0.3;
    let p = SimParams::new(1.0, eta, DriveSchedule::constant(-300.0, 0.0, 4.0).unwrap(), 4.0, grid, 1e-4).unwrap();
    let mut psi = init_state(&grid, &CoherentInit::real(-3.0), &SpinInit::Up, &p).unwrap();
    let z0 = -3.0 * SQRT_2;
    let mut displaced = 0.0f64;
    let mut prop = SplitStep::new(grid, PropagatorOptions::default()).unwrap();
    prop.propagate_observed(&mut psi, &p, 4.0, &stops, |s| {
        let z = eta + (z0 - eta) * s.tau.cos();
        displaced = displaced.max((observables(s).mean_z - z).abs());
    })
    .unwrap();

    // classical spin length under the full drive
    let t_end = 10.0;
    let cp = SimParams::new(
        400.0,
        0.3,
        DriveSchedule::cai(&CaiParams::standard(), t_end).unwrap(),
        t_end,
        GridSpec::symmetric(64.0, 4096).unwrap(),
        1e-3,
    )
    .unwrap();
    let b0 = effective_field(&cp, 0.0, -20.0).unwrap();
    let init = ClassicalState::new(-20.0, 0.0, ClassicalState::spin_along(&b0, 0.5, 1.0));
    let tol = Tolerances {
        rtol: 1e-10,
        atol: 1e-12,
        ..Tolerances::default()
    };
    let per_tau = integrate_with(&init, &cp, 0.0, t_end, 0.05, &tol)
        .map(|tr| {
            tr.taus
                .iter()
                .zip(&tr.states)
                .map(|(t, s): (&f64, &ClassicalState<f64>)| (s.spin_norm() - 0.5).abs() / t.max(1.0))
                .fold(0.0, f64::max)
        })
        .unwrap_or(f64::INFINITY);

    r.record(
        "8",
        motion <= 1e-6 && rabi <= 1e-6 && displaced <= 1e-5 && per_tau <= 1e-8,
        format!(
            "coherent motion {motion:.1e}, Rabi {rabi:.1e} (want <= 1e-6); displaced oscillator {displaced:.1e} (want <= 1e-5); classical |S| drift {per_tau:.1e} per unit tau (want <= 1e-8)"
        ),
    );
}

fn convergence(r: &mut Report) {
    let grid = GridSpec::symmetric(40.0, 1024).unwrap();
    let t_end = 2.0;
    let mean_z = |dt: f64| {
        let p = SimParams::new(
            400.0,
            0.3,
            DriveSchedule::cai(&CaiParams::standard(), t_end).unwrap(),
            t_end,
            grid,
            dt,
        )
        .unwrap();
        let psi = init_state(&grid, &CoherentInit::real(-10.0 * SQRT_2), &SpinInit::Up, &p).unwrap();
        let (end, _) = propagate(&psi, &p, t_end, &[]).unwrap();
        let o = observables(&end);
        (o.mean_z, o.spin_expect[0])
    };
    let z: Vec<(f64, f64)> = [1e-4, 5e-5, 2.5e-5].iter().map(|dt| mean_z(*dt)).collect();
    let order_z = ((z[0].0 - z[1].0).abs() / (z[1].0 - z[2].0).abs()).log2();
    let order_s = ((z[0].1 - z[1].1).abs() / (z[1].1 - z[2].1).abs()).log2();
    r.record(
        "order",
        (order_z - 2.0).abs() <= 0.2,
        format!(
            "dt 1e-4/5e-5/2.5e-5 to tau = {t_end}: order from <z> {order_z:.3} (changes {:.1e}, {:.1e}), from <Sx> {order_s:.3} (want 2.0 +- 0.2)",
            (z[0].0 - z[1].0).abs(),
            (z[1].0 - z[2].0).abs()
        ),
    );
}

fn main() {
    // optional criterion ids on the command line select a subset
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let runs = |ids: &[&str]| wanted.is_empty() || ids.iter().any(|id| wanted.iter().any(|w| w == id));
    let mut r = Report { rows: Vec::new() };
    let start = Instant::now();
    if runs(&["2-static", "2"]) {
        static_branching(&mut r);
    }
    if runs(&["7"]) {
        oracle(&mut r);
    }
    if runs(&["8"]) {
        analytic_limits(&mut r);
    }
    if runs(&["order"]) {
        convergence(&mut r);
    }
    if runs(&["1-scaled", "9", "1"]) {
        scaled_and_correspondence(&mut r);
    }
    if runs(&["3"]) {
        ramp(&mut r);
    }
    if runs(&["1", "2-paper", "2", "4", "6"]) {
        formation(&mut r);
    }
    if runs(&["5"]) {
        phase_readout(&mut r);
    }
    println!(
        "criterion {:<9} {:<12} macroscopic amplitude estimate for an external experiment and decoherence times are out of scope",
        "10", "EXCLUDED"
    );
    let passed = r.rows.iter().filter(|x| x.1).count();
    let unexpected: Vec<&str> = r
        .rows
        .iter()
        .filter(|(id, pass)| !pass && !KNOWN_FAILING.contains(&id.as_str()))
        .map(|(id, _)| id.as_str())
        .collect();
    println!(
        "acceptance: {passed}/{} passed, {} known failing, {:.0} s",
        r.rows.len(),
        r.rows.iter().filter(|(id, pass)| !pass && KNOWN_FAILING.contains(&id.as_str())).count(),
        start.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        println!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
