use approx::assert_abs_diff_eq;
use mrfm_sim::analysis::{observables, spin_branching, tilt_branching};
use mrfm_sim::model::{adiabaticity_margin, CaiParams, DriveSchedule, SimParams};
use mrfm_sim::quantum::*;
use num_complex::Complex;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

fn params(schedule: DriveSchedule<f64>, eta: f64, grid: GridSpec<f64>, dt: f64) -> SimParams<f64> {
    let t_end = schedule.t_end();
    SimParams::new(400.0, eta, schedule, t_end, grid, dt).unwrap()
}

#[test]
fn free_oscillation_half_period() {
    let grid = GridSpec::symmetric(40.0, 1024).unwrap();
    let p = params(DriveSchedule::constant(0.0, 0.0, PI).unwrap(), 0.0, grid, 1e-3);
    let psi = init_state(&grid, &CoherentInit::real(-10.0 * SQRT_2), &SpinInit::Up, &p).unwrap();
    let obs0 = observables(&psi);
    assert_abs_diff_eq!(obs0.mean_z, -20.0, epsilon = 1e-10);
    assert_abs_diff_eq!(obs0.std_z, 0.5f64.sqrt(), epsilon = 1e-10);
    let (end, _) = propagate(&psi, &p, PI, &[]).unwrap();
    let obs = observables(&end);
    assert_abs_diff_eq!(obs.mean_z, 20.0, epsilon = 1e-6);
    assert_abs_diff_eq!(obs.std_z, 0.5f64.sqrt(), epsilon = 1e-6);
}

#[test]
fn rabi_flip_in_half_period() {
    let grid = GridSpec::symmetric(20.0, 512).unwrap();
    let t = PI / 400.0;
    let p = params(DriveSchedule::constant(0.0, 400.0, t).unwrap(), 0.0, grid, 1e-5);
    let psi = init_state(&grid, &CoherentInit::real(0.0), &SpinInit::Up, &p).unwrap();
    let (end, _) = propagate(&psi, &p, t, &[]).unwrap();
    assert_abs_diff_eq!(observables(&end).spin_expect[2], -0.5, epsilon = 1e-10);
}

#[test]
fn displaced_oscillator_when_rf_is_off() {
    let grid = GridSpec::symmetric(20.0, 512).unwrap();
    let t_end = 2.0 * PI;
    let p = params(DriveSchedule::constant(0.0, 0.0, t_end).unwrap(), 0.3, grid, 1e-3);
    let mut psi = init_state(&grid, &CoherentInit::real(0.0), &SpinInit::Up, &p).unwrap();
    let mut prop = SplitStep::new(grid, PropagatorOptions::default()).unwrap();
    let stops: Vec<f64> = (1..=40).map(|k| k as f64 * t_end / 40.0).collect();
    let mut worst: f64 = 0.0;
    let (up0, down0) = psi.populations();
    prop.propagate_observed(&mut psi, &p, t_end, &stops, |s| {
        let z = observables(s).mean_z;
        worst = worst.max((z - 0.3 * (1.0 - s.tau.cos())).abs());
    })
    .unwrap();
    assert!(worst < 1e-5, "deviation {worst}");
    let (up, down) = psi.populations();
    assert_abs_diff_eq!(up, up0, epsilon = 1e-10);
    assert_abs_diff_eq!(down, down0, epsilon = 1e-10);
}

#[test]
fn oracle_agreement_on_small_amplitude() {
    let grid = GridSpec::symmetric(16.0, 512).unwrap();
    let sched = DriveSchedule::custom(vec![mrfm_sim::model::Segment {
        start: 0.0,
        end: 2.0,
        dphi: mrfm_sim::model::Profile::linear(0.0, -20.0, 1.0),
        epsilon: mrfm_sim::model::Profile::constant(5.0),
    }])
    .unwrap();
    let p = SimParams::new(5.0, 0.3, sched, 2.0, grid, 1e-4).unwrap();
    let c = CoherentInit::real(-2.0);
    let psi = init_state(&grid, &c, &SpinInit::Up, &p).unwrap();
    let (end, _) = propagate(&psi, &p, 2.0, &[]).unwrap();
    let oracle = oracle_propagate_fock(&c, &SpinInit::Up, &p, 64, 2.0).unwrap();
    let fid = end.fidelity(&oracle).unwrap();
    assert!(fid > 1.0 - 1e-6, "fidelity {fid}");
}

#[test]
fn oracle_keeps_coherent_profile_without_coupling() {
    let grid = GridSpec::symmetric(16.0, 256).unwrap();
    let p = SimParams::new(1.0, 0.0, DriveSchedule::constant(0.0, 0.0, 1.0).unwrap(), 1.0, grid, 1e-3)
        .unwrap();
    let c = CoherentInit::new(Complex::new(1.5, 0.5));
    let out = oracle_propagate_fock(&c, &SpinInit::Up, &p, 40, 1.0).unwrap();
    // |α e^{-iτ}⟩ up to a global phase
    let rotated = CoherentInit::new(c.alpha * Complex::from_polar(1.0, -1.0));
    let expect = init_state(&grid, &rotated, &SpinInit::Up, &p).unwrap();
    assert!(out.fidelity(&expect).unwrap() > 1.0 - 1e-9);
}

#[test]
fn oracle_reports_truncation() {
    let grid = GridSpec::symmetric(16.0, 256).unwrap();
    let p = SimParams::new(1.0, 0.0, DriveSchedule::constant(0.0, 0.0, 1.0).unwrap(), 1.0, grid, 1e-3)
        .unwrap();
    let err = oracle_propagate_fock(&CoherentInit::real(3.0), &SpinInit::Up, &p, 8, 1.0).unwrap_err();
    assert!(matches!(err, QuantumError::Truncation { .. }));
}

#[test]
fn co_moving_frame_reproduces_fixed_frame() {
    let grid = GridSpec::symmetric(40.0, 1024).unwrap();
    let cai = CaiParams::standard().scaled(0.1);
    let p = params(DriveSchedule::cai(&cai, 30.0).unwrap(), 0.3, grid, 2e-4);
    let psi = init_state(&grid, &CoherentInit::real(-10.0 * SQRT_2), &SpinInit::Up, &p).unwrap();
    let (fixed, _) = propagate(&psi, &p, 30.0, &[]).unwrap();

    let local = GridSpec::symmetric(20.0, 512).unwrap();
    let p_local = SimParams { grid: local, ..p.clone() };
    let mut moving = init_state(&local, &CoherentInit::real(0.0), &SpinInit::Up, &p_local).unwrap();
    // same laboratory state: packet at -20 expressed in a frame centred there
    moving.frame.z_shift = -20.0;
    let mut prop = SplitStep::new(local, PropagatorOptions::co_moving(None)).unwrap();
    prop.propagate_observed(&mut moving, &p_local, 30.0, &[], |_| {}).unwrap();

    let a = observables(&fixed);
    let b = observables(&moving);
    assert_abs_diff_eq!(a.mean_z, b.mean_z, epsilon = 1e-6);
    assert_abs_diff_eq!(a.std_z, b.std_z, epsilon = 1e-6);
    for k in 0..3 {
        assert_abs_diff_eq!(a.spin_expect[k], b.spin_expect[k], epsilon = 1e-6);
    }
    // amplitudes agree after mapping back to laboratory positions
    let lab = moving.resample(&grid);
    let overlap = fixed.inner(&lab).unwrap();
    assert!((overlap - Complex::new(1.0, 0.0)).norm() < 1e-5, "overlap {overlap}");
}

#[test]
fn along_eff_is_field_eigenvector() {
    let grid = GridSpec::symmetric(40.0, 1024).unwrap();
    let p = params(DriveSchedule::cai(&CaiParams::standard(), 30.0).unwrap(), 0.3, grid, 1e-4);
    let c = CoherentInit::real(-10.0 * SQRT_2);
    for (init, sign) in [(SpinInit::AlongEff, 1.0), (SpinInit::OppositeEff, -1.0)] {
        let psi = init_state(&grid, &c, &init, &p).unwrap();
        let s = observables(&psi).spin_expect;
        let n = (400.0f64.powi(2) + 6000.0f64.powi(2)).sqrt();
        assert_abs_diff_eq!(s[0], sign * 0.5 * 400.0 / n, epsilon = 1e-6);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s[2], sign * 0.5 * 6000.0 / n, epsilon = 1e-6);
    }
}

#[test]
fn coherent_state_moments() {
    let grid = GridSpec::symmetric(30.0, 2048).unwrap();
    let p = params(DriveSchedule::constant(0.0, 1.0, 1.0).unwrap(), 0.0, grid, 1e-3);
    let c = CoherentInit::new(Complex::new(-3.0, 2.0));
    let psi = init_state(&grid, &c, &SpinInit::PlusX, &p).unwrap();
    let (a, b) = psi.populations();
    assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(b, 0.5, epsilon = 1e-12);
    let obs = observables(&psi);
    assert_abs_diff_eq!(obs.mean_z, -3.0 * SQRT_2, epsilon = 1e-6 * 3.0 * SQRT_2);
    assert_abs_diff_eq!(obs.spin_expect[0], 0.5, epsilon = 1e-12);
    // momentum from the phase gradient: free evolution by π/2 maps ⟨p⟩ to -⟨z⟩
    let pp = params(DriveSchedule::constant(0.0, 0.0, FRAC_PI_2).unwrap(), 0.0, grid, 1e-3);
    let (end, _) = propagate(&psi, &pp, FRAC_PI_2, &[]).unwrap();
    assert_abs_diff_eq!(observables(&end).mean_z, 2.0 * SQRT_2, epsilon = 1e-6);
}

#[test]
fn coarse_grid_is_rejected() {
    let grid = GridSpec::symmetric(40.0, 256).unwrap();
    let p = params(DriveSchedule::constant(0.0, 1.0, 1.0).unwrap(), 0.0, grid, 1e-3);
    assert!(matches!(
        init_state(&grid, &CoherentInit::real(0.0), &SpinInit::Up, &p),
        Err(QuantumError::Grid(_))
    ));
}

#[test]
fn undersized_grid_shows_edge_mass() {
    let grid = GridSpec::symmetric(8.0, 512).unwrap();
    let p = params(DriveSchedule::constant(0.0, 0.0, PI).unwrap(), 0.0, grid, 1e-3);
    let psi = init_state(&grid, &CoherentInit::from_mean(0.0, 7.0), &SpinInit::Up, &p).unwrap();
    let (defect, edge) = leakage(&psi);
    assert!(defect < 1e-10);
    assert!(edge < 1e-8);
    // a quarter period later the packet reaches the edge band
    let (end, _) = propagate(&psi, &p, FRAC_PI_2, &[]).unwrap();
    let (_, edge) = leakage(&end);
    assert!(edge > 1e-8, "edge mass {edge}");
}

#[test]
fn static_tilt_gives_tan_squared_branching() {
    let grid = GridSpec::symmetric(16.0, 256).unwrap();
    for theta in [0.05, 0.1, 0.3] {
        let p = params(DriveSchedule::constant(-1000.0, 0.0, 2.0).unwrap(), 0.0, grid, 1e-4);
        // field along +z; spin tilted by θ
        let psi = init_state(
            &grid,
            &CoherentInit::real(0.0),
            &SpinInit::Custom { theta, phi: 0.0 },
            &p,
        )
        .unwrap();
        let (end, _) = propagate(&psi, &p, 2.0, &[]).unwrap();
        let r = spin_branching(&end, [0.0, 0.0, 1.0]);
        assert!((r / tilt_branching(theta) - 1.0).abs() < 1e-8, "θ = {theta}: {r}");
    }
}

#[test]
fn snapshots_are_returned_in_order() {
    let grid = GridSpec::symmetric(16.0, 256).unwrap();
    let p = params(DriveSchedule::constant(0.0, 1.0, 2.0).unwrap(), 0.1, grid, 1e-3);
    let psi = init_state(&grid, &CoherentInit::real(0.0), &SpinInit::Up, &p).unwrap();
    let taus = [0.0, 0.25, 0.8, 1.3];
    let (end, snaps) = propagate(&psi, &p, 2.0, &taus).unwrap();
    assert_eq!(snaps.len(), 4);
    for (s, t) in snaps.iter().zip(taus) {
        assert_eq!(s.tau, t);
    }
    assert_eq!(end.tau, 2.0);
    let (_, none) = propagate(&psi, &p, 2.0, &[]).unwrap();
    assert!(none.is_empty());
}

#[test]
fn pi_pulses_flip_the_spin() {
    let grid = GridSpec::symmetric(16.0, 256).unwrap();
    let sched = DriveSchedule::pi_pulse(PI / 2.0, PI, 5.0).unwrap();
    let p = SimParams::new(1.0, 0.0, sched, 5.0, grid, 1e-3).unwrap();
    let psi = init_state(&grid, &CoherentInit::real(0.0), &SpinInit::Up, &p).unwrap();
    let (mid, _) = propagate(&psi, &p, 2.0, &[]).unwrap();
    assert_abs_diff_eq!(observables(&mid).spin_expect[2], -0.5, epsilon = 1e-12);
    let (end, _) = propagate(&psi, &p, 5.0, &[]).unwrap();
    assert_abs_diff_eq!(observables(&end).spin_expect[2], 0.5, epsilon = 1e-12);
}

#[test]
fn blowup_is_reported() {
    let grid = GridSpec::symmetric(16.0, 256).unwrap();
    let p = params(DriveSchedule::constant(0.0, 1.0, 1.0).unwrap(), 0.0, grid, 1e-3);
    let mut psi = init_state(&grid, &CoherentInit::real(0.0), &SpinInit::Up, &p).unwrap();
    psi.psi1[100] = Complex::new(f64::NAN, 0.0);
    assert!(matches!(step(&psi, &p, 1e-3), Err(QuantumError::Blowup { .. })));
}

#[test]
fn works_in_single_precision() {
    let grid = GridSpec::<f32>::symmetric(40.0, 1024).unwrap();
    let sched = DriveSchedule::<f32>::constant(0.0, 0.0, std::f32::consts::PI).unwrap();
    let p = SimParams::new(1.0f32, 0.0, sched, std::f32::consts::PI, grid, 1e-3).unwrap();
    let psi = init_state(&grid, &CoherentInit::real(-10.0 * std::f32::consts::SQRT_2), &SpinInit::Up, &p)
        .unwrap();
    let (end, _) = propagate(&psi, &p, std::f32::consts::PI, &[]).unwrap();
    assert!((observables(&end).mean_z - 20.0).abs() < 1e-2);
}

#[test]
fn steps_are_unitary_without_absorber() {
    let grid = GridSpec::symmetric(40.0, 1024).unwrap();
    let cai = CaiParams::standard().scaled(0.1);
    let p = params(DriveSchedule::cai(&cai, 30.0).unwrap(), 0.3, grid, 1e-3);
    let mut psi = init_state(&grid, &CoherentInit::real(-10.0 * SQRT_2), &SpinInit::Up, &p).unwrap();
    let mut prop = SplitStep::new(grid, PropagatorOptions::default()).unwrap();
    let (defect, _) = leakage(&psi);
    assert!(defect < 1e-10, "fresh state norm defect {defect}");
    for _ in 0..2000 {
        let before = psi.norm();
        prop.step(&mut psi, &p, 1e-3).unwrap();
        assert!((psi.norm() - before).abs() < 1e-12);
    }
}

#[test]
fn populations_are_conserved_without_rf() {
    let grid = GridSpec::symmetric(40.0, 1024).unwrap();
    let p = params(DriveSchedule::constant(-300.0, 0.0, 2.0).unwrap(), 0.3, grid, 1e-3);
    let spin = SpinInit::Custom { theta: 1.0, phi: 0.4 };
    let psi = init_state(&grid, &CoherentInit::real(-5.0), &spin, &p).unwrap();
    let (up0, down0) = psi.populations();
    let (end, _) = propagate(&psi, &p, 2.0, &[]).unwrap();
    let (up, down) = end.populations();
    assert_abs_diff_eq!(up, up0, epsilon = 1e-12);
    assert_abs_diff_eq!(down, down0, epsilon = 1e-12);
}

#[test]
fn spin_is_captured_by_the_effective_field() {
    let grid = GridSpec::symmetric(16.0, 256).unwrap();
    let p = params(DriveSchedule::cai(&CaiParams::standard(), 30.0).unwrap(), 0.0, grid, 1e-4);
    let mut psi = init_state(&grid, &CoherentInit::real(0.0), &SpinInit::AlongEff, &p).unwrap();
    let mut prop = SplitStep::new(grid, PropagatorOptions::default()).unwrap();
    let stops: Vec<f64> = (1..=300).map(|k| k as f64 * 0.1).collect();
    let mut worst_margin: f64 = 0.0;
    let mut checked = 0;
    prop.propagate_observed(&mut psi, &p, 30.0, &stops, |s| {
        for t in [s.tau - 0.05, s.tau] {
            if let Some(m) = adiabaticity_margin(&p, t).unwrap().margin() {
                worst_margin = worst_margin.max(m);
            }
        }
        let d = p.drive(s.tau).unwrap();
        let b = [d.epsilon, 0.0, -d.dphi_dtau];
        let bn = (b[0] * b[0] + b[2] * b[2]).sqrt();
        let sp = observables(s).spin_expect;
        let along = (sp[0] * b[0] + sp[2] * b[2]) / bn;
        assert!(along >= 0.5 - 10.0 * worst_margin, "τ = {}: {along} (margin {worst_margin})", s.tau);
        checked += 1;
    })
    .unwrap();
    assert_eq!(checked, 300);
}

#[test]
fn resolved_grid_keeps_edges_empty() {
    let grid = GridSpec::symmetric(40.0, 1024).unwrap();
    let p = params(DriveSchedule::constant(0.0, 0.0, PI).unwrap(), 0.0, grid, 1e-3);
    let psi = init_state(&grid, &CoherentInit::real(-10.0 * SQRT_2), &SpinInit::Up, &p).unwrap();
    let (_, snaps) = propagate(&psi, &p, PI, &[0.5, 1.0, 2.0, 3.0]).unwrap();
    for s in snaps {
        let (defect, edge) = leakage(&s);
        assert!(defect < 1e-10);
        assert!(edge < 1e-8, "edge mass {edge} at τ = {}", s.tau);
    }
}
