//! Dimensionless spin–cantilever model shared by the quantum and classical
//! solvers.
//!
//! Lengths are in units of the cantilever zero-point scale `√(ħ/m ωc)`, time
//! in units of `1/ωc`. In the rotating frame the Hamiltonian reads
//!
//! ```text
//! H = p²/2 + z²/2 - B_eff(τ, z) · S,   B_eff = (ε(τ), 0, -dφ/dτ + 2ηz)
//! ```

mod physical;
mod schedule;

pub use physical::{from_physical, PhysicalParams, PhysicalScaling, HBAR};
pub use schedule::{
    CaiParams, DriveSample, DriveSchedule, Profile, ScheduleKind, Segment,
};

use crate::quantum::GridSpec;
use crate::scalar::{lit, Real};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("τ = {tau} lies outside the schedule range [0, {t_end}]")]
    OutOfRange { tau: f64, t_end: f64 },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid parameter `{field}`: {message}")]
    Param { field: &'static str, message: String },
}

impl ModelError {
    pub(crate) fn param(field: &'static str, message: impl Into<String>) -> Self {
        ModelError::Param {
            field,
            message: message.into(),
        }
    }
}

/// Complete description of one dimensionless run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams<T> {
    /// Reference rf amplitude (the value of ε when it is constant).
    pub epsilon_scale: T,
    pub eta: T,
    pub schedule: DriveSchedule<T>,
    pub t_end: T,
    pub grid: GridSpec<T>,
    pub dt: T,
}

impl<T: Real> SimParams<T> {
    pub fn new(
        epsilon_scale: T,
        eta: T,
        schedule: DriveSchedule<T>,
        t_end: T,
        grid: GridSpec<T>,
        dt: T,
    ) -> Result<Self, ModelError> {
        let p = SimParams {
            epsilon_scale,
            eta,
            schedule,
            t_end,
            grid,
            dt,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.eta >= T::zero()) || !self.eta.is_finite() {
            return Err(ModelError::param("eta", format!("must be ≥ 0, got {}", self.eta)));
        }
        if !(self.epsilon_scale > T::zero()) || !self.epsilon_scale.is_finite() {
            return Err(ModelError::param(
                "epsilon",
                format!("must be > 0, got {}", self.epsilon_scale),
            ));
        }
        if !(self.t_end > T::zero()) || !self.t_end.is_finite() {
            return Err(ModelError::param("t_end", format!("must be > 0, got {}", self.t_end)));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(ModelError::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.schedule.t_end() < self.t_end {
            return Err(ModelError::param(
                "t_end",
                format!(
                    "schedule covers [0, {}] but the run ends at {}",
                    self.schedule.t_end(),
                    self.t_end
                ),
            ));
        }
        Ok(())
    }

    /// Checks that the grid holds a packet whose centre reaches
    /// `amplitude_bound`, with five initial standard deviations to spare.
    pub fn check_extent(&self, amplitude_bound: T) -> Result<(), ModelError> {
        let margin = amplitude_bound.abs() + lit::<T>(5.0) * T::FRAC_1_SQRT_2();
        if -self.grid.z_min < margin || self.grid.z_max < margin {
            return Err(ModelError::param(
                "grid",
                format!(
                    "extent [{}, {}] does not cover ±{} (amplitude bound plus 5σ)",
                    self.grid.z_min, self.grid.z_max, margin
                ),
            ));
        }
        Ok(())
    }

    pub fn drive(&self, tau: T) -> Result<DriveSample<T>, ModelError> {
        self.schedule.eval(tau)
    }
}

/// Rotating-frame magnetic field acting on the spin (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveField<T> {
    pub bx: T,
    pub by: T,
    pub bz: T,
}

impl<T: Real> EffectiveField<T> {
    /// Field for a given drive sample, coupling and cantilever position.
    pub fn from_drive(d: &DriveSample<T>, eta: T, z: T) -> Self {
        EffectiveField {
            bx: d.epsilon,
            by: T::zero(),
            bz: -d.dphi_dtau + lit::<T>(2.0) * eta * z,
        }
    }

    pub fn magnitude(&self) -> T {
        (self.bx * self.bx + self.by * self.by + self.bz * self.bz).sqrt()
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.bx, self.by, self.bz]
    }
}

/// `B_eff(τ, z) = (ε(τ), 0, -dφ/dτ(τ) + 2ηz)`.
pub fn effective_field<T: Real>(
    p: &SimParams<T>,
    tau: T,
    z: T,
) -> Result<EffectiveField<T>, ModelError> {
    Ok(EffectiveField::from_drive(&p.drive(tau)?, p.eta, z))
}

/// Result of the adiabaticity diagnostic `|d²φ/dτ²| / ε²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Adiabaticity<T> {
    /// The ratio; values ≪ 1 mean the spin follows the effective field.
    Margin(T),
    /// ε(τ) = 0: there is no transverse field to follow.
    NoRfField,
}

impl<T: Real> Adiabaticity<T> {
    pub fn margin(self) -> Option<T> {
        match self {
            Adiabaticity::Margin(m) => Some(m),
            Adiabaticity::NoRfField => None,
        }
    }
}

pub fn adiabaticity_margin<T: Real>(
    p: &SimParams<T>,
    tau: T,
) -> Result<Adiabaticity<T>, ModelError> {
    schedule_adiabaticity(&p.schedule, tau)
}

pub fn schedule_adiabaticity<T: Real>(
    s: &DriveSchedule<T>,
    tau: T,
) -> Result<Adiabaticity<T>, ModelError> {
    let d = s.eval(tau)?;
    if d.epsilon == T::zero() {
        return Ok(Adiabaticity::NoRfField);
    }
    Ok(Adiabaticity::Margin(
        d.d2phi_dtau2.abs() / (d.epsilon * d.epsilon),
    ))
}
