//! Symmetric split-step propagation of the spinor field.
//!
//! Each step of length `h` applies `K(h/2) · V(h) · K(h/2)`, with `K` the
//! free-particle factor applied in momentum space and `V` the local factor:
//! the scalar potential phase times the exact 2×2 spin rotation about the
//! effective field evaluated at the step midpoint. Consecutive kinetic half
//! steps are fused, so a run of `n` steps costs `n + 1` transform pairs per
//! component.
//!
//! In [`FrameMode::CoMoving`] the grid follows a classical reference
//! trajectory `(z_c, p_c)` subject to the current mean spin force
//! `f = 2η⟨S_z⟩`. The stored amplitudes then only resolve the packet shape,
//! so long runs at large amplitude need neither a wide grid nor a fine
//! spacing. See [`Frame`] for the transformation.

use crate::model::SimParams;
use crate::quantum::{Frame, GridSpec, QuantumError, SpinorField};
use crate::scalar::{from_usize, lit, to_f64, Real};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Coordinates in which the amplitudes are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameMode {
    #[default]
    Fixed,
    CoMoving,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorOptions<T> {
    pub frame: FrameMode,
    /// Fraction of the grid at each end covered by an absorbing mask.
    /// Removed probability accumulates in [`SpinorField::absorbed`].
    pub absorber: Option<T>,
}

impl<T: Real> Default for PropagatorOptions<T> {
    fn default() -> Self {
        PropagatorOptions {
            frame: FrameMode::Fixed,
            absorber: None,
        }
    }
}

impl<T: Real> PropagatorOptions<T> {
    pub fn co_moving(absorber: Option<T>) -> Self {
        PropagatorOptions {
            frame: FrameMode::CoMoving,
            absorber,
        }
    }
}

struct KineticCache<T> {
    h: T,
    half: Vec<Complex<T>>,
    full: Vec<Complex<T>>,
}

/// Reusable split-step propagator for one grid.
pub struct SplitStep<T: Real> {
    grid: GridSpec<T>,
    options: PropagatorOptions<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
    half_k2: Vec<T>,
    y: Vec<T>,
    mask: Vec<T>,
    kinetic: Option<KineticCache<T>>,
    steps_taken: u64,
}

impl<T: Real> SplitStep<T> {
    pub fn new(grid: GridSpec<T>, options: PropagatorOptions<T>) -> Result<Self, QuantumError> {
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let half_k2 = grid
            .momenta()
            .into_iter()
            .map(|k| k * k / lit(2.0))
            .collect();
        let mask = match options.absorber {
            None => vec![T::one(); n],
            Some(frac) => {
                if !(frac > T::zero() && frac < lit(0.5)) {
                    return Err(QuantumError::Grid(format!(
                        "absorber fraction must lie in (0, 0.5), got {frac}"
                    )));
                }
                absorbing_mask(n, grid.edge_band(frac))
            }
        };
        Ok(SplitStep {
            grid,
            options,
            forward,
            inverse,
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
            half_k2,
            y: grid.positions(),
            mask,
            kinetic: None,
            steps_taken: 0,
        })
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn options(&self) -> &PropagatorOptions<T> {
        &self.options
    }

    /// Total number of split steps performed so far.
    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    fn check_state(&self, state: &SpinorField<T>) -> Result<(), QuantumError> {
        if state.grid != self.grid {
            return Err(QuantumError::Grid(
                "state grid differs from the propagator grid".into(),
            ));
        }
        if self.options.frame == FrameMode::Fixed && !state.frame.is_identity() {
            return Err(QuantumError::Grid(
                "a fixed-frame propagator needs a state in the laboratory frame".into(),
            ));
        }
        Ok(())
    }

    /// Advances `state` by a single step of length `dtau`.
    pub fn step(
        &mut self,
        state: &mut SpinorField<T>,
        p: &SimParams<T>,
        dtau: T,
    ) -> Result<(), QuantumError> {
        if !(dtau > T::zero()) {
            return Err(QuantumError::Step(format!("dtau must be positive, got {dtau}")));
        }
        self.check_state(state)?;
        let target = state.tau + dtau;
        self.advance(state, p, target, 1)
    }

    /// Propagates to `t_target` in steps of at most `p.dt`, returning copies
    /// of the state at each of `snapshot_taus`.
    pub fn propagate(
        &mut self,
        state: &SpinorField<T>,
        p: &SimParams<T>,
        t_target: T,
        snapshot_taus: &[T],
    ) -> Result<(SpinorField<T>, Vec<SpinorField<T>>), QuantumError> {
        let mut snaps = Vec::with_capacity(snapshot_taus.len());
        let mut wanted = snapshot_taus.iter().copied().peekable();
        let mut current = state.clone();
        self.propagate_observed(&mut current, p, t_target, snapshot_taus, |s| {
            while wanted.peek().is_some_and(|t| *t <= s.tau) {
                wanted.next();
                snaps.push(s.clone());
            }
        })?;
        Ok((current, snaps))
    }

    /// Propagates `state` to `t_target`, stopping exactly at every `stops`
    /// time (sorted, within `[state.tau, t_target]`) to call `observer`.
    /// The final state is not passed to `observer` unless it is a stop.
    pub fn propagate_observed<F>(
        &mut self,
        state: &mut SpinorField<T>,
        p: &SimParams<T>,
        t_target: T,
        stops: &[T],
        mut observer: F,
    ) -> Result<(), QuantumError>
    where
        F: FnMut(&SpinorField<T>),
    {
        self.check_state(state)?;
        let t0 = state.tau;
        if t_target < t0 || t_target > p.t_end {
            return Err(QuantumError::Step(format!(
                "target τ = {t_target} outside [{t0}, {}]",
                p.t_end
            )));
        }
        if stops.windows(2).any(|w| w[1] < w[0]) {
            return Err(QuantumError::Step("stop times must be sorted".into()));
        }
        if let (Some(first), Some(last)) = (stops.first(), stops.last()) {
            if *first < t0 || *last > t_target {
                return Err(QuantumError::Step(format!(
                    "stop times must lie in [{t0}, {t_target}]"
                )));
            }
        }
        if self.options.frame == FrameMode::CoMoving && state.frame.is_identity() {
            self.recenter(state);
        }

        let pulses: Vec<T> = p
            .schedule
            .pulse_times()
            .iter()
            .copied()
            .filter(|t| *t > t0 && *t <= t_target)
            .collect();
        let mut marks: Vec<(T, Mark)> = Vec::new();
        marks.extend(stops.iter().map(|t| (*t, Mark::Observe)));
        marks.extend(pulses.iter().map(|t| (*t, Mark::Pulse)));
        marks.extend(
            p.schedule
                .breakpoints_between(t0, t_target)
                .into_iter()
                .map(|t| (t, Mark::Break)),
        );
        marks.push((t_target, Mark::Break));
        // pulses act before an observation at the same instant
        marks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

        for (t, mark) in marks {
            if t > state.tau {
                let n = steps_for(t - state.tau, p.dt);
                self.advance(state, p, t, n)?;
            }
            match mark {
                Mark::Pulse => state.flip_x(),
                Mark::Observe => observer(state),
                Mark::Break => {}
            }
        }
        Ok(())
    }

    /// Re-expresses the state in a frame centred on its current mean
    /// position and momentum. The laboratory wavefunction is unchanged.
    pub fn recenter(&mut self, state: &mut SpinorField<T>) {
        let norm = state.norm();
        if !(norm > T::zero()) {
            return;
        }
        let dz = self.grid.dz();
        let mut m = T::zero();
        for i in 0..self.grid.n_points {
            m = m + self.y[i] * (state.psi1[i].norm_sqr() + state.psi2[i].norm_sqr());
        }
        let a = m * dz / norm;
        let b = self.local_momentum(state) / norm;
        // φ'(y) = e^{-i b (y + z_c + a)} φ(y + a)
        let kmom = self.grid.momenta();
        let n = self.grid.n_points;
        let scale = T::one() / from_usize(n);
        let zc = state.frame.z_shift;
        for psi in [&mut state.psi1, &mut state.psi2] {
            self.forward.process_with_scratch(psi, &mut self.scratch);
            for (c, k) in psi.iter_mut().zip(&kmom) {
                *c = *c * Complex::from_polar(scale, *k * a);
            }
            self.inverse.process_with_scratch(psi, &mut self.scratch);
            for (c, y) in psi.iter_mut().zip(&self.y) {
                *c = *c * Complex::from_polar(T::one(), -b * (*y + zc + a));
            }
        }
        state.frame.z_shift = zc + a;
        state.frame.p_shift = state.frame.p_shift + b;
    }

    /// `∫ φ* p φ dy` in the stored frame (unnormalized).
    fn local_momentum(&mut self, state: &SpinorField<T>) -> T {
        let kmom = self.grid.momenta();
        let mut acc = T::zero();
        let mut total = T::zero();
        for psi in [&state.psi1, &state.psi2] {
            let mut buf = psi.clone();
            self.forward.process_with_scratch(&mut buf, &mut self.scratch);
            for (c, k) in buf.iter().zip(&kmom) {
                acc = acc + *k * c.norm_sqr();
                total = total + c.norm_sqr();
            }
        }
        if total > T::zero() {
            acc / total * state.norm()
        } else {
            T::zero()
        }
    }

    /// `n` fused steps of equal length from `state.tau` to `target`.
    fn advance(
        &mut self,
        state: &mut SpinorField<T>,
        p: &SimParams<T>,
        target: T,
        n: usize,
    ) -> Result<(), QuantumError> {
        let t0 = state.tau;
        if target > p.t_end {
            return Err(QuantumError::Step(format!(
                "τ = {target} is past the end of the schedule ({})",
                p.t_end
            )));
        }
        let h = (target - t0) / from_usize(n);
        self.prepare_kinetic(h);
        let mut force = if self.options.frame == FrameMode::CoMoving {
            mean_force(state, p.eta)
        } else {
            T::zero()
        };
        self.kinetic(state, true);
        for j in 0..n {
            let tau = t0 + h * from_usize(j);
            let sums = self.potential(state, p, tau, h, force)?;
            if self.options.frame == FrameMode::CoMoving {
                advance_frame(&mut state.frame, force, h);
                force = p.eta * sums.sz / sums.norm;
            }
            state.absorbed = state.absorbed + sums.absorbed;
            self.kinetic(state, j + 1 == n);
            self.steps_taken += 1;
        }
        state.tau = target;
        Ok(())
    }

    fn prepare_kinetic(&mut self, h: T) {
        if self.kinetic.as_ref().is_some_and(|c| c.h == h) {
            return;
        }
        let scale = T::one() / from_usize(self.grid.n_points);
        let phase = |dt: T| -> Vec<Complex<T>> {
            self.half_k2
                .iter()
                .map(|e| Complex::from_polar(scale, -*e * dt))
                .collect()
        };
        let half = phase(h / lit(2.0));
        let full = phase(h);
        self.kinetic = Some(KineticCache { h, half, full });
    }

    fn kinetic(&mut self, state: &mut SpinorField<T>, half: bool) {
        let cache = self.kinetic.as_ref().expect("kinetic factors prepared");
        let factors = if half { &cache.half } else { &cache.full };
        for psi in [&mut state.psi1, &mut state.psi2] {
            self.forward.process_with_scratch(psi, &mut self.scratch);
            for (c, f) in psi.iter_mut().zip(factors) {
                *c = *c * *f;
            }
            self.inverse.process_with_scratch(psi, &mut self.scratch);
        }
    }

    /// Applies the local factor for the step `[tau, tau + h]`.
    fn potential(
        &mut self,
        state: &mut SpinorField<T>,
        p: &SimParams<T>,
        tau: T,
        h: T,
        force: T,
    ) -> Result<Sums<T>, QuantumError> {
        let half_h = h / lit(2.0);
        let mid = (tau + half_h).min(p.t_end);
        let drive = p.schedule.eval(mid)?;
        let two_eta = lit::<T>(2.0) * p.eta;
        let zc_mid = if self.options.frame == FrameMode::CoMoving {
            let mut f = state.frame;
            advance_frame(&mut f, force, half_h);
            f.z_shift
        } else {
            T::zero()
        };
        let bx = drive.epsilon;
        let bx2 = bx * bx;
        let bz0 = -drive.dphi_dtau + two_eta * zc_mid;
        let (mut norm, mut sz, mut absorbed) = (T::zero(), T::zero(), T::zero());
        let half = lit::<T>(0.5);
        for i in 0..self.grid.n_points {
            let y = self.y[i];
            let bz = bz0 + two_eta * y;
            let b = (bx2 + bz * bz).sqrt();
            let (s, c) = (b * half_h).sin_cos();
            let sr = if b > T::zero() { s / b } else { half_h };
            let v = (y * half + force) * y * h;
            let (vs, vc) = (-v).sin_cos();
            let ph = Complex::new(vc, vs);
            let u11 = Complex::new(c, sr * bz) * ph;
            let u22 = Complex::new(c, -sr * bz) * ph;
            let u12 = Complex::new(T::zero(), sr * bx) * ph;
            let a1 = state.psi1[i];
            let a2 = state.psi2[i];
            let mut n1 = u11 * a1 + u12 * a2;
            let mut n2 = u12 * a1 + u22 * a2;
            let m = self.mask[i];
            if m < T::one() {
                let before = n1.norm_sqr() + n2.norm_sqr();
                n1 = n1 * m;
                n2 = n2 * m;
                absorbed = absorbed + before * (T::one() - m * m);
            }
            state.psi1[i] = n1;
            state.psi2[i] = n2;
            let (d1, d2) = (n1.norm_sqr(), n2.norm_sqr());
            norm = norm + d1 + d2;
            sz = sz + (d1 - d2) * half;
        }
        if !norm.is_finite() || !sz.is_finite() {
            return Err(QuantumError::Blowup { tau: to_f64(tau) });
        }
        let dz = self.grid.dz();
        Ok(Sums {
            norm: norm * dz,
            sz: sz * dz,
            absorbed: absorbed * dz,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Mark {
    Pulse,
    Observe,
    Break,
}

struct Sums<T> {
    norm: T,
    sz: T,
    absorbed: T,
}

/// Number of equal steps no longer than `dt` that cover `span`.
fn steps_for<T: Real>(span: T, dt: T) -> usize {
    let ratio = span / dt;
    // tolerate rounding when span is an exact multiple of dt
    let n = (ratio - lit(1e-9)).ceil();
    n.to_usize().unwrap_or(1).max(1)
}

/// `2η⟨S_z⟩` per unit norm.
fn mean_force<T: Real>(state: &SpinorField<T>, eta: T) -> T {
    let (p1, p2) = state.populations();
    let norm = p1 + p2;
    if norm > T::zero() {
        eta * (p1 - p2) / norm
    } else {
        T::zero()
    }
}

/// Moves the reference `(z_c, p_c)` along `z'' = -z + f` for time `h` and
/// accumulates the phase `∫ (p_c²/2 - z_c²/2 + f z_c) dτ`.
fn advance_frame<T: Real>(frame: &mut Frame<T>, f: T, h: T) {
    let u0 = frame.z_shift - f;
    let p0 = frame.p_shift;
    let (s, c) = h.sin_cos();
    let two_h = h + h;
    let (s2, c2) = two_h.sin_cos();
    let half = lit::<T>(0.5);
    frame.phase = frame.phase
        + half * ((p0 * p0 - u0 * u0) * s2 * half + u0 * p0 * (c2 - T::one()))
        + half * f * f * h;
    frame.z_shift = f + u0 * c + p0 * s;
    frame.p_shift = -u0 * s + p0 * c;
}

/// `cos^{1/8}` ramp over `band` nodes at each end, 1 in the interior.
fn absorbing_mask<T: Real>(n: usize, band: usize) -> Vec<T> {
    let mut mask = vec![T::one(); n];
    let band = band.min(n / 2);
    for j in 0..band {
        // j = 0 at the outer edge
        let x = from_usize::<T>(band - j) / from_usize(band) * T::FRAC_PI_2();
        let m = x.cos().max(T::zero()).powf(lit(0.125));
        mask[j] = m;
        mask[n - 1 - j] = m;
    }
    mask
}

/// Single step with default options (fixed frame, no absorber).
pub fn step<T: Real>(
    state: &SpinorField<T>,
    p: &SimParams<T>,
    dtau: T,
) -> Result<SpinorField<T>, QuantumError> {
    let mut prop = SplitStep::new(state.grid, PropagatorOptions::default())?;
    let mut next = state.clone();
    prop.step(&mut next, p, dtau)?;
    Ok(next)
}

/// Propagation with default options and step `p.dt`.
pub fn propagate<T: Real>(
    state: &SpinorField<T>,
    p: &SimParams<T>,
    t_target: T,
    snapshot_taus: &[T],
) -> Result<(SpinorField<T>, Vec<SpinorField<T>>), QuantumError> {
    let mut prop = SplitStep::new(state.grid, PropagatorOptions::default())?;
    prop.propagate(state, p, t_target, snapshot_taus)
}
