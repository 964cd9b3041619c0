//! Classical limit: a classical cantilever coordinate driven by an average
//! spin that precesses about the effective field,
//!
//! ```text
//! d²z/dτ² + z = 2η S_z,    dS/dτ = S × B_eff(τ, z)
//! ```
//!
//! Integration uses an embedded 8(5,3) Runge–Kutta pair with step-size
//! control. π-pulse schedules are integrated piecewise between pulses, each
//! pulse rotating the spin by π about x.

use crate::model::{
    effective_field, DriveSchedule, EffectiveField, ModelError, PhysicalParams, PhysicalScaling,
    ScheduleKind, SimParams,
};
use crate::scalar::{lit, Real};
use nalgebra::SVector;
use ode_solvers::dop853::Dop853;
use ode_solvers::dop_shared::{IntegrationError, OutputType, System};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step-size control failed at τ = {tau}: {reason}")]
    Stiffness { tau: f64, reason: String },
    #[error("invalid request: {0}")]
    Invalid(String),
}

/// Cantilever coordinate, velocity and average spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState<T> {
    pub z: T,
    pub p: T,
    pub spin: [T; 3],
}

// The integrator state carries τ as a sixth component so the right-hand side
// is autonomous: ode_solvers' DOP853 evaluates its last stage at the wrong
// node for explicitly time-dependent systems.
type Vec6<T> = SVector<T, 6>;

impl<T: Real> ClassicalState<T> {
    pub fn new(z: T, p: T, spin: [T; 3]) -> Self {
        ClassicalState { z, p, spin }
    }

    pub fn spin_norm(&self) -> T {
        let [x, y, z] = self.spin;
        (x * x + y * y + z * z).sqrt()
    }

    /// Oscillator energy `(p² + z²)/2`.
    pub fn oscillator_energy(&self) -> T {
        (self.p * self.p + self.z * self.z) / lit(2.0)
    }

    /// Spin of length `norm` along (`sign = 1`) or against (`sign = -1`) the
    /// field `b`.
    pub fn spin_along(b: &EffectiveField<T>, norm: T, sign: T) -> [T; 3] {
        let m = b.magnitude();
        let k = sign * norm / m;
        [b.bx * k, b.by * k, b.bz * k]
    }

    fn to_vec(self, tau: T) -> Vec6<T> {
        Vec6::from([self.z, self.p, self.spin[0], self.spin[1], self.spin[2], tau])
    }

    fn from_vec(v: &Vec6<T>) -> Self {
        ClassicalState {
            z: v[0],
            p: v[1],
            spin: [v[2], v[3], v[4]],
        }
    }

    /// Rotation by π about x.
    pub fn flipped(&self) -> Self {
        ClassicalState {
            spin: [self.spin[0], -self.spin[1], -self.spin[2]],
            ..*self
        }
    }
}

/// Time derivative of the classical state.
pub fn rhs<T: Real>(
    state: &ClassicalState<T>,
    p: &SimParams<T>,
    tau: T,
) -> Result<ClassicalState<T>, ModelError> {
    let b = effective_field(p, tau, state.z)?;
    Ok(derivative(state, &b, p.eta))
}

fn derivative<T: Real>(s: &ClassicalState<T>, b: &EffectiveField<T>, eta: T) -> ClassicalState<T> {
    let [sx, sy, sz] = s.spin;
    ClassicalState {
        z: s.p,
        p: -s.z + lit::<T>(2.0) * eta * sz,
        spin: [
            sy * b.bz - sz * b.by,
            sz * b.bx - sx * b.bz,
            sx * b.by - sy * b.bx,
        ],
    }
}

struct Equations<'a, T: Real> {
    schedule: &'a DriveSchedule<T>,
    eta: T,
}

impl<T: Real> System<T, Vec6<T>> for Equations<'_, T> {
    fn system(&self, _x: T, y: &Vec6<T>, dy: &mut Vec6<T>) {
        // trial stages may overshoot the range by rounding
        let tau = y[5].max(T::zero()).min(self.schedule.t_end());
        let drive = match self.schedule.eval(tau) {
            Ok(d) => d,
            Err(_) => return dy.fill(T::nan()),
        };
        let s = ClassicalState::from_vec(y);
        let b = EffectiveField::from_drive(&drive, self.eta, s.z);
        *dy = derivative(&s, &b, self.eta).to_vec(T::one());
    }
}

/// Integrator controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: u32,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Tolerances {
            rtol: lit(1e-10),
            atol: lit(1e-12),
            max_steps: u32::MAX,
        }
    }
}

/// Samples of a classical run at multiples of `sample_dt` (plus the end
/// point).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub taus: Vec<T>,
    pub states: Vec<ClassicalState<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> Option<&ClassicalState<T>> {
        self.states.last()
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn z_series(&self) -> Vec<(T, T)> {
        self.taus
            .iter()
            .zip(&self.states)
            .map(|(t, s)| (*t, s.z))
            .collect()
    }

    /// Largest `|z|` over the final `window` of the run.
    pub fn envelope_at_end(&self, window: T) -> T {
        let end = self.taus.last().copied().unwrap_or_else(T::zero);
        self.taus
            .iter()
            .zip(&self.states)
            .filter(|(t, _)| **t >= end - window)
            .fold(T::zero(), |m, (_, s)| m.max(s.z.abs()))
    }
}

/// Integrates from `τ = 0` to `t_target`, sampling every `sample_dt`.
pub fn integrate<T: Real>(
    init: &ClassicalState<T>,
    p: &SimParams<T>,
    t_target: T,
    sample_dt: T,
) -> Result<Trajectory<T>, ClassicalError>
where
    f64: From<T>,
{
    integrate_with(init, p, T::zero(), t_target, sample_dt, &Tolerances::default())
}

/// Integrates from `t_start` to `t_target` (backwards when
/// `t_target < t_start`). Samples fall on `t_start ± k·sample_dt` and on
/// `t_target`. A pulse coinciding with a sample is applied before the sample
/// is recorded.
pub fn integrate_with<T: Real>(
    init: &ClassicalState<T>,
    p: &SimParams<T>,
    t_start: T,
    t_target: T,
    sample_dt: T,
    tol: &Tolerances<T>,
) -> Result<Trajectory<T>, ClassicalError>
where
    f64: From<T>,
{
    if !(sample_dt > T::zero()) {
        return Err(ClassicalError::Invalid("sample_dt must be positive".into()));
    }
    let schedule = &p.schedule;
    for t in [t_start, t_target] {
        schedule.eval(t)?;
    }
    if t_target == t_start {
        return Ok(Trajectory {
            taus: vec![t_start],
            states: vec![*init],
        });
    }
    let direction = if t_target >= t_start { T::one() } else { -T::one() };
    let ahead = |a: T, b: T| (b - a) * direction > T::zero();
    // pulse and sample grids are built independently; treat rounding-level
    // differences as the same instant
    let coincide = |a: T, b: T| (a - b).abs() <= lit::<T>(64.0) * T::eps() * a.abs().max(T::one());

    let mut pulses: Vec<T> = if schedule.kind() == ScheduleKind::PiPulse {
        schedule
            .pulse_times()
            .iter()
            .copied()
            .filter(|t| ahead(t_start, *t) && !ahead(t_target, *t))
            .collect()
    } else {
        Vec::new()
    };
    if direction < T::zero() {
        pulses.reverse();
    }

    let mut traj = Trajectory {
        taus: vec![t_start],
        states: vec![*init],
    };
    let mut state = *init;
    let mut t0 = t_start;
    let mut k = 1usize;
    let mut next_pulse = 0usize;
    loop {
        let sample = t_start + direction * sample_dt * T::from_usize(k).unwrap();
        let sample = if ahead(t_target, sample) { t_target } else { sample };
        let pulse = pulses.get(next_pulse).copied();
        let (t1, is_pulse, is_sample) = match pulse {
            Some(tp) if coincide(tp, sample) => (sample, true, true),
            Some(tp) if ahead(tp, sample) => (tp, true, false),
            _ => (sample, false, true),
        };
        state = advance(&state, schedule, p.eta, t0, t1, tol)?;
        t0 = t1;
        if is_pulse {
            state = state.flipped();
            next_pulse += 1;
        }
        if is_sample {
            traj.taus.push(t1);
            traj.states.push(state);
            k += 1;
            if t1 == t_target {
                break;
            }
        }
    }
    Ok(traj)
}

fn advance<T: Real>(
    state: &ClassicalState<T>,
    schedule: &DriveSchedule<T>,
    eta: T,
    t0: T,
    t1: T,
    tol: &Tolerances<T>,
) -> Result<ClassicalState<T>, ClassicalError>
where
    f64: From<T>,
{
    if (t1 - t0).abs() <= lit::<T>(64.0) * T::eps() * t0.abs().max(T::one()) {
        return Ok(*state);
    }
    let sys = Equations { schedule, eta };
    let span = t1 - t0;
    let mut solver = Dop853::from_param(
        sys,
        t0,
        t1,
        span,
        state.to_vec(t0),
        tol.rtol,
        tol.atol,
        lit(0.9),
        T::zero(),
        lit(0.333),
        lit(6.0),
        span.abs(),
        T::zero(),
        tol.max_steps,
        // the built-in stiffness probe misfires on the tiny steps the
        // precession forces; step-size underflow still reports failure
        u32::MAX,
        OutputType::Sparse,
    );
    solver.integrate().map_err(stiffness)?;
    let end = solver.y_out().last().ok_or_else(|| ClassicalError::Stiffness {
        tau: t0.to_f64().unwrap_or(f64::NAN),
        reason: "integrator produced no output".into(),
    })?;
    let out = ClassicalState::from_vec(end);
    if !end.iter().all(|v| v.is_finite()) {
        return Err(ClassicalError::Stiffness {
            tau: t1.to_f64().unwrap_or(f64::NAN),
            reason: "non-finite state".into(),
        });
    }
    Ok(out)
}

fn stiffness(e: IntegrationError) -> ClassicalError {
    let tau = match &e {
        IntegrationError::MaxNumStepReached { x, .. } => *x,
        IntegrationError::StepSizeUnderflow { x } => *x,
        IntegrationError::StiffnessDetected { x } => *x,
    };
    ClassicalError::Stiffness {
        tau,
        reason: e.to_string(),
    }
}

/// Stationary amplitude estimate: integrate to `τ = Q_c`, take the envelope
/// of `|z|` over the last cantilever period and convert it to metres.
pub fn stationary_amplitude<T: Real>(
    p: &SimParams<T>,
    pp: &PhysicalParams<T>,
    init: &ClassicalState<T>,
) -> Result<T, ClassicalError>
where
    f64: From<T>,
{
    let scaling: PhysicalScaling<T> = crate::model::from_physical(pp)?;
    let q = pp.quality_factor;
    if !(q > T::zero()) {
        return Err(ClassicalError::Invalid("quality factor must be positive".into()));
    }
    let traj = integrate(init, p, q, T::TAU() / lit(64.0))?;
    Ok(scaling.length_to_si(traj.envelope_at_end(T::TAU())))
}
