//! Number-basis reference propagator for small amplitudes and short times.
//!
//! The state is expanded as `Ψ_s(z) = Σ_n c_{s,n} h_n(z)` over the lowest
//! `n_max + 1` oscillator eigenfunctions. With `z = (a + a†)/√2` the
//! Hamiltonian is banded and the coefficients are integrated with an
//! adaptive 8th-order Runge–Kutta method at tight tolerance.

use crate::model::{DriveSchedule, ScheduleKind, SimParams};
use crate::quantum::{CoherentInit, QuantumError, SpinInit, SpinorField};
use crate::scalar::{lit, to_f64, Real};
use nalgebra::DVector;
use num_complex::Complex;
use ode_solvers::dop853::Dop853;
use ode_solvers::dop_shared::{OutputType, System};

/// Probability allowed in the five highest retained levels.
pub const TRUNCATION_LIMIT: f64 = 1e-10;
const GUARD_LEVELS: usize = 5;
/// Longest interval integrated between truncation checks.
const CHECK_INTERVAL: f64 = 0.25;

struct FockSystem<'a> {
    schedule: &'a DriveSchedule<f64>,
    eta: f64,
    levels: usize,
    ladder: Vec<f64>,
}

impl FockSystem<'_> {
    // layout: [Re c1, Im c1, Re c2, Im c2] blocks of length `levels`, then τ.
    // Carrying τ in the state keeps the system autonomous; ode_solvers'
    // DOP853 evaluates its last stage at the wrong node otherwise.
    fn amp(&self, y: &DVector<f64>, s: usize, n: usize) -> Complex<f64> {
        let base = 2 * s * self.levels;
        Complex::new(y[base + n], y[base + self.levels + n])
    }
}

impl System<f64, DVector<f64>> for FockSystem<'_> {
    fn system(&self, _x: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let l = self.levels;
        let tau = y[4 * l].clamp(0.0, self.schedule.t_end());
        dy[4 * l] = 1.0;
        let d = match self.schedule.eval(tau) {
            Ok(d) => d,
            Err(_) => return dy.fill(f64::NAN),
        };
        let z_of = |s: usize, n: usize| {
            let mut acc = Complex::new(0.0, 0.0);
            if n > 0 {
                acc += self.amp(y, s, n - 1) * self.ladder[n];
            }
            if n + 1 < l {
                acc += self.amp(y, s, n + 1) * self.ladder[n + 1];
            }
            acc
        };
        for n in 0..l {
            let c1 = self.amp(y, 0, n);
            let c2 = self.amp(y, 1, n);
            let e = n as f64 + 0.5;
            let h1 = c1 * (e + d.dphi_dtau / 2.0) - c2 * (d.epsilon / 2.0) - z_of(0, n) * self.eta;
            let h2 = c2 * (e - d.dphi_dtau / 2.0) - c1 * (d.epsilon / 2.0) + z_of(1, n) * self.eta;
            // dc/dτ = -i H c
            for (s, hc) in [(0usize, h1), (1usize, h2)] {
                let base = 2 * s * l;
                dy[base + n] = hc.im;
                dy[base + l + n] = -hc.re;
            }
        }
    }
}

/// Coherent-state coefficients `e^{-|α|²/2} αⁿ/√n!` for `n ≤ n_max`.
pub fn coherent_coefficients<T: Real>(c: &CoherentInit<T>, n_max: usize) -> Vec<Complex<f64>> {
    let alpha = Complex::new(to_f64(c.alpha.re), to_f64(c.alpha.im));
    let mut out = Vec::with_capacity(n_max + 1);
    let mut a = Complex::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    out.push(a);
    for n in 1..=n_max {
        a = a * alpha / (n as f64).sqrt();
        out.push(a);
    }
    out
}

/// Oscillator eigenfunctions `h_0..h_{n_max}` at `z` by the normalized
/// three-term recurrence.
pub fn hermite_functions(z: f64, n_max: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(n_max + 1);
    h.push(std::f64::consts::PI.powf(-0.25) * (-z * z / 2.0).exp());
    if n_max >= 1 {
        h.push(std::f64::consts::SQRT_2 * z * h[0]);
    }
    for n in 1..n_max {
        let next = (2.0 / (n as f64 + 1.0)).sqrt() * z * h[n]
            - (n as f64 / (n as f64 + 1.0)).sqrt() * h[n - 1];
        h.push(next);
    }
    h
}

fn tail_weight(y: &DVector<f64>, levels: usize) -> f64 {
    let guard = GUARD_LEVELS.min(levels);
    let mut w = 0.0;
    for block in 0..4 {
        for n in levels - guard..levels {
            w += y[block * levels + n].powi(2);
        }
    }
    w
}

/// Propagates `|α⟩ ⊗ χ` from τ = 0 to `t_target` in the truncated number
/// basis and samples the result on `p.grid`.
pub fn oracle_propagate_fock<T: Real>(
    c: &CoherentInit<T>,
    s: &SpinInit<T>,
    p: &SimParams<T>,
    n_max: usize,
    t_target: T,
) -> Result<SpinorField<T>, QuantumError> {
    if n_max < GUARD_LEVELS {
        return Err(QuantumError::Step(format!(
            "n_max must be at least {GUARD_LEVELS}"
        )));
    }
    let t_end = to_f64(t_target);
    if !(t_end >= 0.0) || t_target > p.t_end {
        return Err(QuantumError::Step(format!(
            "target τ = {t_end} outside [0, {}]",
            p.t_end
        )));
    }
    let levels = n_max + 1;
    let drive0 = p.drive(T::zero())?;
    let chi = s.spinor(&drive0)?;
    let chi = [
        Complex::new(to_f64(chi[0].re), to_f64(chi[0].im)),
        Complex::new(to_f64(chi[1].re), to_f64(chi[1].im)),
    ];
    let amps = coherent_coefficients(c, n_max);
    let mut y = DVector::<f64>::zeros(4 * levels + 1);
    for (n, a) in amps.iter().enumerate() {
        for (sidx, x) in chi.iter().enumerate() {
            let v = a * x;
            y[2 * sidx * levels + n] = v.re;
            y[2 * sidx * levels + levels + n] = v.im;
        }
    }
    let lost = 1.0 - amps.iter().map(|a| a.norm_sqr()).sum::<f64>();
    let tail = tail_weight(&y, levels);
    if lost > TRUNCATION_LIMIT || tail > TRUNCATION_LIMIT {
        return Err(QuantumError::Truncation {
            tau: 0.0,
            leakage: lost.max(tail),
        });
    }

    let schedule = p.schedule.map(|v| to_f64(v));
    let mut stops: Vec<f64> = schedule
        .breakpoints_between(0.0, t_end)
        .into_iter()
        .chain(if schedule.kind() == ScheduleKind::PiPulse {
            schedule.pulse_times().to_vec()
        } else {
            Vec::new()
        })
        .filter(|t| *t > 0.0 && *t <= t_end)
        .collect();
    stops.push(t_end);
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup();
    let pulses = schedule.pulse_times().to_vec();

    let ladder: Vec<f64> = (0..levels).map(|n| (n as f64 / 2.0).sqrt()).collect();
    let mut t = 0.0;
    for stop in stops {
        while t < stop {
            let t1 = (t + CHECK_INTERVAL).min(stop);
            let sys = FockSystem {
                schedule: &schedule,
                eta: to_f64(p.eta),
                levels,
                ladder: ladder.clone(),
            };
            let span = t1 - t;
            y[4 * levels] = t;
            let mut solver = Dop853::from_param(
                sys,
                t,
                t1,
                span,
                y.clone(),
                1e-12,
                1e-14,
                0.9,
                0.0,
                0.333,
                6.0,
                span,
                0.0,
                u32::MAX,
                u32::MAX,
                OutputType::Sparse,
            );
            solver.integrate().map_err(|e| QuantumError::Step(e.to_string()))?;
            y = solver
                .y_out()
                .last()
                .cloned()
                .ok_or_else(|| QuantumError::Step("oracle produced no output".into()))?;
            t = t1;
            let tail = tail_weight(&y, levels);
            if tail > TRUNCATION_LIMIT || !tail.is_finite() {
                return Err(QuantumError::Truncation { tau: t, leakage: tail });
            }
        }
        if pulses.contains(&stop) {
            flip_coefficients(&mut y, levels);
        }
    }

    let mut state = SpinorField::zeros(p.grid, t_target);
    for i in 0..p.grid.n_points {
        let z = to_f64(p.grid.z(i));
        let h = hermite_functions(z, n_max);
        let mut a1 = Complex::new(0.0, 0.0);
        let mut a2 = Complex::new(0.0, 0.0);
        for (n, hn) in h.iter().enumerate() {
            a1 += Complex::new(y[n], y[levels + n]) * hn;
            a2 += Complex::new(y[2 * levels + n], y[3 * levels + n]) * hn;
        }
        state.psi1[i] = Complex::new(lit(a1.re), lit(a1.im));
        state.psi2[i] = Complex::new(lit(a2.re), lit(a2.im));
    }
    Ok(state)
}

// (c1, c2) → (-i c2, -i c1)
fn flip_coefficients(y: &mut DVector<f64>, levels: usize) {
    for n in 0..levels {
        let c1 = Complex::new(y[n], y[levels + n]);
        let c2 = Complex::new(y[2 * levels + n], y[3 * levels + n]);
        let mi = Complex::new(0.0, -1.0);
        let (n1, n2) = (mi * c2, mi * c1);
        y[n] = n1.re;
        y[levels + n] = n1.im;
        y[2 * levels + n] = n2.re;
        y[3 * levels + n] = n2.im;
    }
}
