//! SI parameters of a spin/cantilever setup and their reduction to the
//! dimensionless ε, η and unit scales.

use crate::model::ModelError;
use crate::scalar::{lit, Real};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Laboratory parameters (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams<T> {
    pub g_factor: T,
    /// Magneton of the spin species, J/T.
    pub magneton: T,
    /// Permanent field at the spin, T.
    pub b0: T,
    /// Rotating rf field amplitude, T.
    pub b1: T,
    /// ∂Bz/∂Z at the spin, T/m.
    pub field_gradient: T,
    /// Effective cantilever mass, kg.
    pub effective_mass: T,
    /// Cantilever angular frequency, rad/s.
    pub omega_c: T,
    pub quality_factor: T,
}

impl<T: Real> PhysicalParams<T> {
    /// Gyromagnetic ratio gμ/ħ, rad/(s·T).
    pub fn gamma(&self) -> T {
        self.g_factor * self.magneton / lit(HBAR)
    }

    /// Larmor frequency γB₀, rad/s.
    pub fn omega_l(&self) -> T {
        self.gamma() * self.b0
    }

    /// Rabi frequency γB₁, rad/s.
    pub fn omega_1(&self) -> T {
        self.gamma() * self.b1
    }
}

/// Dimensionless parameters plus conversion factors back to SI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalScaling<T> {
    pub epsilon: T,
    pub eta: T,
    /// Metres per unit of dimensionless z: `√(ħ / m ωc)`.
    pub length_scale: T,
    /// Seconds per unit of τ: `1/ωc`.
    pub time_scale: T,
}

impl<T: Real> PhysicalScaling<T> {
    pub fn length_to_si(&self, z: T) -> T {
        z * self.length_scale
    }

    pub fn length_from_si(&self, z_si: T) -> T {
        z_si / self.length_scale
    }

    pub fn time_to_si(&self, tau: T) -> T {
        tau * self.time_scale
    }

    pub fn time_from_si(&self, t: T) -> T {
        t / self.time_scale
    }
}

/// `ε = γB₁/ωc`, `η = gμ(∂Bz/∂Z) / (2√(m ωc³ ħ))`, `Z = z √(ħ/m ωc)`,
/// `t = τ/ωc`.
pub fn from_physical<T: Real>(pp: &PhysicalParams<T>) -> Result<PhysicalScaling<T>, ModelError> {
    let positive = [
        ("g_factor", pp.g_factor),
        ("magneton", pp.magneton),
        ("b1", pp.b1),
        ("field_gradient", pp.field_gradient),
        ("effective_mass", pp.effective_mass),
        ("omega_c", pp.omega_c),
    ];
    for (field, v) in positive {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(ModelError::param(field, format!("must be positive, got {v}")));
        }
    }
    if !(pp.quality_factor > T::zero()) {
        return Err(ModelError::param("quality_factor", "must be positive"));
    }
    if !(pp.b0 >= T::zero()) {
        return Err(ModelError::param("b0", "must be non-negative"));
    }
    // ħ is far below f32 range once squared; do the reduction in f64
    let f = |v: T| v.to_f64().unwrap();
    let m = f(pp.effective_mass);
    let wc = f(pp.omega_c);
    let eta = f(pp.g_factor) * f(pp.magneton) * f(pp.field_gradient)
        / (2.0 * (m * wc.powi(3) * HBAR).sqrt());
    let epsilon = f(pp.g_factor) * f(pp.magneton) / HBAR * f(pp.b1) / wc;
    let length_scale = (HBAR / (m * wc)).sqrt();
    let scaling: PhysicalScaling<T> = PhysicalScaling {
        epsilon: lit(epsilon),
        eta: lit(eta),
        length_scale: lit(length_scale),
        time_scale: lit(1.0 / wc),
    };
    if !scaling.eta.is_finite() || !scaling.epsilon.is_finite() {
        return Err(ModelError::param(
            "effective_mass",
            "reduced parameters are not representable in this scalar type",
        ));
    }
    Ok(scaling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> PhysicalParams<f64> {
        PhysicalParams {
            g_factor: 5.586,
            magneton: 5.050_783_7e-27,
            b0: 2.35,
            b1: 1e-3,
            field_gradient: 1e5,
            effective_mass: 1e-12,
            omega_c: 2.0 * std::f64::consts::PI * 1e3,
            quality_factor: 1e4,
        }
    }

    #[test]
    fn inverts_coupling_definition() {
        let mut pp = base();
        // pick the gradient so that gμ G = 2√(m ωc³ ħ) · 0.3
        let target = 2.0 * (pp.effective_mass * pp.omega_c.powi(3) * HBAR).sqrt() * 0.3;
        pp.field_gradient = target / (pp.g_factor * pp.magneton);
        let s = from_physical(&pp).unwrap();
        assert_relative_eq!(s.eta, 0.3, max_relative = 1e-12);
    }

    #[test]
    fn rabi_ratio() {
        let mut pp = base();
        pp.b1 = 400.0 * pp.omega_c / pp.gamma();
        let s = from_physical(&pp).unwrap();
        assert_relative_eq!(s.epsilon, 400.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_positive_mass_or_frequency() {
        let mut pp = base();
        pp.effective_mass = 0.0;
        assert!(matches!(
            from_physical(&pp),
            Err(ModelError::Param { field: "effective_mass", .. })
        ));
        let mut pp = base();
        pp.omega_c = -1.0;
        assert!(matches!(
            from_physical(&pp),
            Err(ModelError::Param { field: "omega_c", .. })
        ));
    }

    #[test]
    fn unit_round_trip() {
        let s = from_physical(&base()).unwrap();
        for z in [-40.0, 0.3, 1234.5] {
            let back = s.length_from_si(s.length_to_si(z));
            assert_relative_eq!(back, z, max_relative = 1e-12);
        }
        for tau in [0.1, 92.08, 1e4] {
            assert_relative_eq!(s.time_from_si(s.time_to_si(tau)), tau, max_relative = 1e-12);
        }
        // the reduced quantities reproduce the SI inputs
        let pp = base();
        let omega_1 = s.epsilon / s.time_scale;
        assert_relative_eq!(omega_1, pp.omega_1(), max_relative = 1e-12);
        let grad = s.eta * 2.0 * (pp.effective_mass * pp.omega_c.powi(3) * HBAR).sqrt()
            / (pp.g_factor * pp.magneton);
        assert_relative_eq!(grad, pp.field_gradient, max_relative = 1e-12);
    }
}
