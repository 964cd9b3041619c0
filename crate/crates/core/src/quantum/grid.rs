use crate::quantum::QuantumError;
use crate::scalar::{from_usize, Real};

/// Uniform periodic grid on `[z_min, z_max)` with `n_points` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub z_min: T,
    pub z_max: T,
    pub n_points: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(z_min: T, z_max: T, n_points: usize) -> Result<Self, QuantumError> {
        if !(z_min < z_max) || !z_min.is_finite() || !z_max.is_finite() {
            return Err(QuantumError::Grid(format!(
                "z_min ({z_min}) must be below z_max ({z_max})"
            )));
        }
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(QuantumError::Grid(format!(
                "n_points must be a power of two ≥ 2, got {n_points}"
            )));
        }
        Ok(GridSpec {
            z_min,
            z_max,
            n_points,
        })
    }

    /// Symmetric grid `[-half_width, half_width)`.
    pub fn symmetric(half_width: T, n_points: usize) -> Result<Self, QuantumError> {
        Self::new(-half_width, half_width, n_points)
    }

    pub fn length(&self) -> T {
        self.z_max - self.z_min
    }

    pub fn dz(&self) -> T {
        self.length() / from_usize(self.n_points)
    }

    pub fn z(&self, i: usize) -> T {
        self.z_min + self.dz() * from_usize(i)
    }

    pub fn positions(&self) -> Vec<T> {
        (0..self.n_points).map(|i| self.z(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn momenta(&self) -> Vec<T> {
        let n = self.n_points;
        let dk = T::TAU() / self.length();
        (0..n)
            .map(|j| {
                if j < n / 2 {
                    dk * from_usize(j)
                } else {
                    -dk * from_usize(n - j)
                }
            })
            .collect()
    }

    /// Largest representable momentum, `π / dz`.
    pub fn p_nyquist(&self) -> T {
        T::PI() / self.dz()
    }

    /// Fails unless `dz < π / p_max`.
    pub fn check_resolves(&self, p_max: T) -> Result<(), QuantumError> {
        if self.dz() * p_max.abs() >= T::PI() {
            return Err(QuantumError::Grid(format!(
                "spacing {} cannot represent momentum {} (limit {})",
                self.dz(),
                p_max,
                self.p_nyquist()
            )));
        }
        Ok(())
    }

    /// Number of nodes in each outer band holding `fraction` of the grid.
    pub fn edge_band(&self, fraction: T) -> usize {
        let k = (fraction * from_usize(self.n_points)).ceil();
        k.to_usize().unwrap_or(0).max(1).min(self.n_points / 2)
    }
}
