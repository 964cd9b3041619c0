//! Time-dependent rf drive: the phase-modulation rate dφ/dτ and the rf
//! amplitude ε(τ), both as piecewise analytic functions.

use crate::model::ModelError;
use crate::scalar::{lit, Real};

/// The family a schedule was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    /// Linear frequency sweep into resonance followed by sinusoidal phase
    /// modulation at the cantilever frequency, constant rf amplitude.
    Cai,
    /// Same phase modulation, rf amplitude ramped linearly from zero.
    CaiRamped,
    /// No phase modulation, rf amplitude equal to the cantilever frequency.
    Rabi,
    /// No rf between instantaneous spin flips.
    PiPulse,
    /// Arbitrary polynomial/sinusoidal segments.
    CustomPiecewise,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Cai => "cai",
            ScheduleKind::CaiRamped => "cai_ramped",
            ScheduleKind::Rabi => "rabi",
            ScheduleKind::PiPulse => "pi_pulse",
            ScheduleKind::CustomPiecewise => "custom",
        }
    }
}

/// One analytic piece of a drive quantity. Both variants are expressed in the
/// local variable `u = τ - origin`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile<T> {
    /// `c[0] + c[1] u + c[2] u² + ...`
    Polynomial { origin: T, coeffs: Vec<T> },
    /// `offset + amplitude · sin(frequency · u + phase)`
    Sinusoid {
        origin: T,
        offset: T,
        amplitude: T,
        frequency: T,
        phase: T,
    },
}

impl<T: Real> Profile<T> {
    pub fn constant(value: T) -> Self {
        Profile::Polynomial {
            origin: T::zero(),
            coeffs: vec![value],
        }
    }

    /// `value + slope · (τ - origin)`
    pub fn linear(origin: T, value: T, slope: T) -> Self {
        Profile::Polynomial {
            origin,
            coeffs: vec![value, slope],
        }
    }

    pub fn sinusoid(origin: T, amplitude: T, frequency: T) -> Self {
        Profile::Sinusoid {
            origin,
            offset: T::zero(),
            amplitude,
            frequency,
            phase: T::zero(),
        }
    }

    pub fn value(&self, tau: T) -> T {
        match self {
            Profile::Polynomial { origin, coeffs } => {
                let u = tau - *origin;
                coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * u + c)
            }
            Profile::Sinusoid {
                origin,
                offset,
                amplitude,
                frequency,
                phase,
            } => *offset + *amplitude * (*frequency * (tau - *origin) + *phase).sin(),
        }
    }

    pub fn derivative(&self, tau: T) -> T {
        match self {
            Profile::Polynomial { origin, coeffs } => {
                let u = tau - *origin;
                let mut acc = T::zero();
                for (k, &c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * u + c * T::from_usize(k).unwrap();
                }
                acc
            }
            Profile::Sinusoid {
                origin,
                amplitude,
                frequency,
                phase,
                ..
            } => *amplitude * *frequency * (*frequency * (tau - *origin) + *phase).cos(),
        }
    }

    /// Antiderivative in `u`, vanishing at `u = 0`.
    pub fn antiderivative(&self, tau: T) -> T {
        match self {
            Profile::Polynomial { origin, coeffs } => {
                let u = tau - *origin;
                let mut acc = T::zero();
                for (k, &c) in coeffs.iter().enumerate().rev() {
                    acc = acc * u + c / T::from_usize(k + 1).unwrap();
                }
                acc * u
            }
            Profile::Sinusoid {
                origin,
                offset,
                amplitude,
                frequency,
                phase,
            } => {
                let u = tau - *origin;
                if *frequency == T::zero() {
                    return (*offset + *amplitude * phase.sin()) * u;
                }
                *offset * u
                    - *amplitude / *frequency * ((*frequency * u + *phase).cos() - phase.cos())
            }
        }
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Profile<U> {
        match self {
            Profile::Polynomial { origin, coeffs } => Profile::Polynomial {
                origin: f(*origin),
                coeffs: coeffs.iter().map(|c| f(*c)).collect(),
            },
            Profile::Sinusoid {
                origin,
                offset,
                amplitude,
                frequency,
                phase,
            } => Profile::Sinusoid {
                origin: f(*origin),
                offset: f(*offset),
                amplitude: f(*amplitude),
                frequency: f(*frequency),
                phase: f(*phase),
            },
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Profile::Polynomial { origin, coeffs } => {
                origin.is_finite() && coeffs.iter().all(|c| c.is_finite())
            }
            Profile::Sinusoid {
                origin,
                offset,
                amplitude,
                frequency,
                phase,
            } => [*origin, *offset, *amplitude, *frequency, *phase]
                .iter()
                .all(|v| v.is_finite()),
        }
    }

    fn is_identically_zero(&self) -> bool {
        match self {
            Profile::Polynomial { coeffs, .. } => coeffs.iter().all(|c| *c == T::zero()),
            Profile::Sinusoid {
                offset, amplitude, ..
            } => *offset == T::zero() && *amplitude == T::zero(),
        }
    }
}

/// A time interval `[start, end)` on which both drive quantities are given by
/// a single analytic profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub start: T,
    pub end: T,
    pub dphi: Profile<T>,
    pub epsilon: Profile<T>,
}

/// Drive values at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample<T> {
    pub dphi_dtau: T,
    pub epsilon: T,
    pub d2phi_dtau2: T,
}

/// Parameters of the cyclic-adiabatic-inversion drive: a linear sweep of
/// dφ/dτ from `sweep_start` to zero over `sweep_duration`, then
/// `modulation · sin(τ - sweep_duration)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaiParams<T> {
    pub epsilon: T,
    pub sweep_start: T,
    pub sweep_duration: T,
    pub modulation: T,
}

impl<T: Real> CaiParams<T> {
    /// ε = 400, dφ/dτ = -6000 + 300τ up to τ = 20, then 1000 sin(τ - 20).
    pub fn standard() -> Self {
        CaiParams {
            epsilon: lit(400.0),
            sweep_start: lit(-6000.0),
            sweep_duration: lit(20.0),
            modulation: lit(1000.0),
        }
    }

    /// Multiplies the rf amplitude and every frequency of the phase
    /// modulation by `factor`, keeping the sweep duration. The initial tilt
    /// ε/|dφ/dτ(0)| is unchanged.
    pub fn scaled(&self, factor: T) -> Self {
        CaiParams {
            epsilon: self.epsilon * factor,
            sweep_start: self.sweep_start * factor,
            sweep_duration: self.sweep_duration,
            modulation: self.modulation * factor,
        }
    }
}

/// Piecewise analytic drive schedule covering `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSchedule<T> {
    kind: ScheduleKind,
    segments: Vec<Segment<T>>,
    pulse_times: Vec<T>,
}

impl<T: Real> DriveSchedule<T> {
    /// Validates segment coverage and wraps them as a schedule of `kind`.
    pub fn new(
        kind: ScheduleKind,
        segments: Vec<Segment<T>>,
        pulse_times: Vec<T>,
    ) -> Result<Self, ModelError> {
        let schedule = DriveSchedule {
            kind,
            segments,
            pulse_times,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn custom(segments: Vec<Segment<T>>) -> Result<Self, ModelError> {
        Self::new(ScheduleKind::CustomPiecewise, segments, Vec::new())
    }

    /// Single segment with constant dφ/dτ and ε.
    pub fn constant(dphi_dtau: T, epsilon: T, t_end: T) -> Result<Self, ModelError> {
        Self::custom(vec![Segment {
            start: T::zero(),
            end: t_end,
            dphi: Profile::constant(dphi_dtau),
            epsilon: Profile::constant(epsilon),
        }])
    }

    pub fn cai(cai: &CaiParams<T>, t_end: T) -> Result<Self, ModelError> {
        let dphi = cai_phase_pieces(cai);
        let eps = vec![(T::zero(), Profile::constant(cai.epsilon))];
        Self::from_pieces(ScheduleKind::Cai, &dphi, &eps, t_end)
    }

    /// CAI phase modulation with ε = epsilon · τ / ramp_duration up to
    /// `ramp_duration`, constant afterwards.
    pub fn cai_ramped(cai: &CaiParams<T>, ramp_duration: T, t_end: T) -> Result<Self, ModelError> {
        if !(ramp_duration > T::zero()) {
            return Err(ModelError::param("ramp_duration", "must be positive"));
        }
        let dphi = cai_phase_pieces(cai);
        let eps = vec![
            (
                T::zero(),
                Profile::linear(T::zero(), T::zero(), cai.epsilon / ramp_duration),
            ),
            (ramp_duration, Profile::constant(cai.epsilon)),
        ];
        Self::from_pieces(ScheduleKind::CaiRamped, &dphi, &eps, t_end)
    }

    pub fn rabi(t_end: T) -> Result<Self, ModelError> {
        let seg = Segment {
            start: T::zero(),
            end: t_end,
            dphi: Profile::constant(T::zero()),
            epsilon: Profile::constant(T::one()),
        };
        Self::new(ScheduleKind::Rabi, vec![seg], Vec::new())
    }

    /// No rf between instantaneous π rotations about x at
    /// `first, first + spacing, ...` strictly before `t_end`.
    pub fn pi_pulse(first: T, spacing: T, t_end: T) -> Result<Self, ModelError> {
        if !(spacing > T::zero()) {
            return Err(ModelError::param("pulse_spacing", "must be positive"));
        }
        if !(first >= T::zero()) {
            return Err(ModelError::param("pulse_first", "must be non-negative"));
        }
        let mut pulses = Vec::new();
        let mut k = 0usize;
        loop {
            let t = first + spacing * T::from_usize(k).unwrap();
            if t >= t_end {
                break;
            }
            pulses.push(t);
            k += 1;
        }
        let seg = Segment {
            start: T::zero(),
            end: t_end,
            dphi: Profile::constant(T::zero()),
            epsilon: Profile::constant(T::zero()),
        };
        Self::new(ScheduleKind::PiPulse, vec![seg], pulses)
    }

    /// Builds segments from independent breakpoint lists for dφ/dτ and ε.
    /// Each list holds `(start, profile)` pairs with the first start at 0.
    pub fn from_pieces(
        kind: ScheduleKind,
        dphi: &[(T, Profile<T>)],
        eps: &[(T, Profile<T>)],
        t_end: T,
    ) -> Result<Self, ModelError> {
        if !(t_end > T::zero()) {
            return Err(ModelError::param("t_end", "must be positive"));
        }
        let mut breaks: Vec<T> = dphi
            .iter()
            .chain(eps.iter())
            .map(|(s, _)| *s)
            .filter(|s| *s < t_end)
            .collect();
        breaks.push(t_end);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let pick = |list: &[(T, Profile<T>)], t: T| -> Option<Profile<T>> {
            list.iter().rev().find(|(s, _)| *s <= t).map(|(_, p)| p.clone())
        };
        let mut segments = Vec::with_capacity(breaks.len());
        for w in breaks.windows(2) {
            let (start, end) = (w[0], w[1]);
            let dp = pick(dphi, start)
                .ok_or_else(|| ModelError::Schedule("dφ/dτ pieces must start at τ = 0".into()))?;
            let ep = pick(eps, start)
                .ok_or_else(|| ModelError::Schedule("ε pieces must start at τ = 0".into()))?;
            segments.push(Segment {
                start,
                end,
                dphi: dp,
                epsilon: ep,
            });
        }
        Self::new(kind, segments, Vec::new())
    }

    fn validate(&self) -> Result<(), ModelError> {
        let segs = &self.segments;
        if segs.is_empty() {
            return Err(ModelError::Schedule("schedule has no segments".into()));
        }
        if segs[0].start != T::zero() {
            return Err(ModelError::Schedule(format!(
                "first segment starts at {} instead of 0",
                segs[0].start
            )));
        }
        for (i, s) in segs.iter().enumerate() {
            if !(s.start < s.end) || !s.start.is_finite() || !s.end.is_finite() {
                return Err(ModelError::Schedule(format!(
                    "segment {i} has an empty or non-finite interval [{}, {})",
                    s.start, s.end
                )));
            }
            if !s.dphi.is_finite() || !s.epsilon.is_finite() {
                return Err(ModelError::Schedule(format!(
                    "segment {i} has non-finite coefficients"
                )));
            }
            if let Some(next) = segs.get(i + 1) {
                if next.start != s.end {
                    return Err(ModelError::Schedule(format!(
                        "segments {i} and {} leave a gap or overlap at τ = {}",
                        i + 1,
                        s.end
                    )));
                }
            }
        }
        if self.kind == ScheduleKind::Rabi {
            let unit = |p: &Profile<T>| {
                matches!(p, Profile::Polynomial { coeffs, .. } if coeffs.len() == 1 && coeffs[0] == T::one())
            };
            if segs
                .iter()
                .any(|s| !s.dphi.is_identically_zero() || !unit(&s.epsilon))
            {
                return Err(ModelError::Schedule(
                    "Rabi schedule requires dφ/dτ ≡ 0 and ε ≡ 1".into(),
                ));
            }
        }
        if self.kind != ScheduleKind::PiPulse && !self.pulse_times.is_empty() {
            return Err(ModelError::Schedule(
                "pulse times are only meaningful for π-pulse schedules".into(),
            ));
        }
        if self
            .pulse_times
            .windows(2)
            .any(|w| !(w[0] < w[1]))
        {
            return Err(ModelError::Schedule("pulse times must be increasing".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn pulse_times(&self) -> &[T] {
        &self.pulse_times
    }

    pub fn t_end(&self) -> T {
        self.segments.last().map(|s| s.end).unwrap_or_else(T::zero)
    }

    fn segment_index(&self, tau: T) -> Result<usize, ModelError> {
        let t_end = self.t_end();
        if !(tau >= T::zero() && tau <= t_end) {
            return Err(ModelError::OutOfRange {
                tau: tau.to_f64().unwrap_or(f64::NAN),
                t_end: t_end.to_f64().unwrap_or(f64::NAN),
            });
        }
        // right-continuous: a boundary belongs to the segment that starts there
        let idx = self
            .segments
            .partition_point(|s| s.start <= tau)
            .saturating_sub(1);
        Ok(idx)
    }

    /// Drive values at `tau`, exact for the active segment.
    pub fn eval(&self, tau: T) -> Result<DriveSample<T>, ModelError> {
        let seg = &self.segments[self.segment_index(tau)?];
        Ok(DriveSample {
            dphi_dtau: seg.dphi.value(tau),
            epsilon: seg.epsilon.value(tau),
            d2phi_dtau2: seg.dphi.derivative(tau),
        })
    }

    /// Accumulated rf phase φ(τ) with φ(0) = 0.
    pub fn phase(&self, tau: T) -> Result<T, ModelError> {
        let idx = self.segment_index(tau)?;
        let mut acc = T::zero();
        for s in &self.segments[..idx] {
            acc = acc + s.dphi.antiderivative(s.end) - s.dphi.antiderivative(s.start);
        }
        let s = &self.segments[idx];
        Ok(acc + s.dphi.antiderivative(tau) - s.dphi.antiderivative(s.start))
    }

    /// Segment boundaries and pulse times in `(from, to)`, sorted.
    pub fn breakpoints_between(&self, from: T, to: T) -> Vec<T> {
        let mut pts: Vec<T> = self
            .segments
            .iter()
            .map(|s| s.start)
            .chain(self.pulse_times.iter().copied())
            .filter(|t| *t > from && *t < to)
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }
    /// Same schedule with every number converted by `f` (e.g. between
    /// scalar precisions).
    pub fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> DriveSchedule<U> {
        DriveSchedule {
            kind: self.kind,
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    start: f(s.start),
                    end: f(s.end),
                    dphi: s.dphi.map(f),
                    epsilon: s.epsilon.map(f),
                })
                .collect(),
            pulse_times: self.pulse_times.iter().map(|t| f(*t)).collect(),
        }
    }
}

fn cai_phase_pieces<T: Real>(cai: &CaiParams<T>) -> Vec<(T, Profile<T>)> {
    let rate = -cai.sweep_start / cai.sweep_duration;
    vec![
        (T::zero(), Profile::linear(T::zero(), cai.sweep_start, rate)),
        (
            cai.sweep_duration,
            Profile::sinusoid(cai.sweep_duration, cai.modulation, T::one()),
        ),
    ]
}
