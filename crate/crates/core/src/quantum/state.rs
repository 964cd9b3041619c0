use crate::model::{DriveSample, SimParams};
use crate::quantum::{GridSpec, QuantumError};
use crate::scalar::{lit, Real};
use num_complex::Complex;

/// Galilean frame attached to a spinor field.
///
/// The laboratory wavefunction is recovered from the stored amplitudes
/// `φ(y)` on the grid by
///
/// ```text
/// Ψ(z) = exp(i (p_shift · z - phase)) · φ(z - z_shift)
/// ```
///
/// A fixed-frame run keeps all three at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Frame<T> {
    pub z_shift: T,
    pub p_shift: T,
    pub phase: T,
}

impl<T: Real> Frame<T> {
    pub fn identity() -> Self {
        Frame {
            z_shift: T::zero(),
            p_shift: T::zero(),
            phase: T::zero(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.z_shift == T::zero() && self.p_shift == T::zero() && self.phase == T::zero()
    }
}

/// Two-component wavefunction `(Ψ₁, Ψ₂)` = amplitudes for `s_z = ±1/2`,
/// sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField<T> {
    pub grid: GridSpec<T>,
    pub psi1: Vec<Complex<T>>,
    pub psi2: Vec<Complex<T>>,
    pub tau: T,
    pub frame: Frame<T>,
    /// Probability removed by an absorbing boundary, if one was used.
    pub absorbed: T,
}

impl<T: Real> SpinorField<T> {
    pub fn zeros(grid: GridSpec<T>, tau: T) -> Self {
        let n = grid.n_points;
        SpinorField {
            grid,
            psi1: vec![Complex::new(T::zero(), T::zero()); n],
            psi2: vec![Complex::new(T::zero(), T::zero()); n],
            tau,
            frame: Frame::identity(),
            absorbed: T::zero(),
        }
    }

    /// Laboratory coordinate of grid node `i`.
    pub fn z(&self, i: usize) -> T {
        self.grid.z(i) + self.frame.z_shift
    }

    pub fn positions(&self) -> Vec<T> {
        (0..self.grid.n_points).map(|i| self.z(i)).collect()
    }

    /// `(∫|Ψ₁|² dz, ∫|Ψ₂|² dz)`.
    pub fn populations(&self) -> (T, T) {
        let dz = self.grid.dz();
        let p1: T = self.psi1.iter().map(|c| c.norm_sqr()).sum();
        let p2: T = self.psi2.iter().map(|c| c.norm_sqr()).sum();
        (p1 * dz, p2 * dz)
    }

    pub fn norm(&self) -> T {
        let (a, b) = self.populations();
        a + b
    }

    pub fn normalize(&mut self) {
        let n = self.norm().sqrt();
        if n > T::zero() {
            let k = T::one() / n;
            for c in self.psi1.iter_mut().chain(self.psi2.iter_mut()) {
                *c = *c * k;
            }
        }
    }

    /// `∫ Ψ_a* Ψ'_a dz` summed over both components. Both fields must share
    /// grid and frame.
    pub fn inner(&self, other: &SpinorField<T>) -> Result<Complex<T>, QuantumError> {
        if self.grid != other.grid || self.frame != other.frame {
            return Err(QuantumError::Grid(
                "inner product needs matching grids and frames".into(),
            ));
        }
        let mut acc = Complex::new(T::zero(), T::zero());
        for (a, b) in self.psi1.iter().zip(&other.psi1) {
            acc = acc + a.conj() * b;
        }
        for (a, b) in self.psi2.iter().zip(&other.psi2) {
            acc = acc + a.conj() * b;
        }
        Ok(acc * self.grid.dz())
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &SpinorField<T>) -> Result<T, QuantumError> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn is_finite(&self) -> bool {
        self.psi1
            .iter()
            .chain(&self.psi2)
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Laboratory-frame copy on the shifted nodes `z(i)`, with the frame's
    /// phase factor applied. Exact; the result has the identity frame.
    pub fn to_lab(&self) -> SpinorField<T> {
        if self.frame.is_identity() {
            return self.clone();
        }
        let f = self.frame;
        let grid = GridSpec {
            z_min: self.grid.z_min + f.z_shift,
            z_max: self.grid.z_max + f.z_shift,
            n_points: self.grid.n_points,
        };
        let ph: Vec<Complex<T>> = (0..grid.n_points)
            .map(|i| Complex::from_polar(T::one(), f.p_shift * grid.z(i) - f.phase))
            .collect();
        let apply = |psi: &[Complex<T>]| psi.iter().zip(&ph).map(|(a, b)| *a * *b).collect();
        SpinorField {
            grid,
            psi1: apply(&self.psi1),
            psi2: apply(&self.psi2),
            tau: self.tau,
            frame: Frame::identity(),
            absorbed: self.absorbed,
        }
    }

    /// Laboratory-frame copy sampled on `grid` by band-limited (Fourier)
    /// interpolation of the stored amplitudes. Points outside the stored
    /// window are zero. Cost is `O(N·M)`; meant for output and checks.
    pub fn resample(&self, grid: &GridSpec<T>) -> SpinorField<T> {
        let n = self.grid.n_points;
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let spectra: Vec<Vec<Complex<T>>> = [&self.psi1, &self.psi2]
            .iter()
            .map(|psi| {
                let mut buf = (*psi).clone();
                fft.process(&mut buf);
                buf
            })
            .collect();
        let k = self.grid.momenta();
        let scale = T::one() / crate::scalar::from_usize(n);
        let mut out = SpinorField::zeros(*grid, self.tau);
        out.absorbed = self.absorbed;
        for i in 0..grid.n_points {
            let z = grid.z(i);
            let y = z - self.frame.z_shift;
            if y < self.grid.z_min || y > self.grid.z_max - self.grid.dz() {
                continue;
            }
            let u = y - self.grid.z_min;
            let ph = Complex::from_polar(scale, self.frame.p_shift * z - self.frame.phase);
            for (s, spec) in spectra.iter().enumerate() {
                let mut acc = Complex::new(T::zero(), T::zero());
                for (c, kj) in spec.iter().zip(&k) {
                    acc = acc + *c * Complex::from_polar(T::one(), *kj * u);
                }
                let v = acc * ph;
                if s == 0 {
                    out.psi1[i] = v;
                } else {
                    out.psi2[i] = v;
                }
            }
        }
        out
    }

    /// Applies a π rotation about x: `(Ψ₁, Ψ₂) → (-iΨ₂, -iΨ₁)`.
    pub fn flip_x(&mut self) {
        let mi = Complex::new(T::zero(), -T::one());
        for (a, b) in self.psi1.iter_mut().zip(self.psi2.iter_mut()) {
            let (na, nb) = (mi * *b, mi * *a);
            *a = na;
            *b = nb;
        }
    }
}

/// Initial spin state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinInit<T> {
    Up,
    Down,
    /// `Ψ₁ = Ψ₂`
    PlusX,
    /// Along `(ε(0), 0, -dφ/dτ(0))`.
    AlongEff,
    /// Against `(ε(0), 0, -dφ/dτ(0))`.
    OppositeEff,
    /// Bloch angles: polar `theta` from +z, azimuth `phi`.
    Custom { theta: T, phi: T },
}

impl<T: Real> SpinInit<T> {
    /// Normalized two-component spin state for drive values `d` at τ = 0.
    pub fn spinor(&self, d: &DriveSample<T>) -> Result<[Complex<T>; 2], QuantumError> {
        let zero = T::zero();
        match *self {
            SpinInit::Up => Ok(bloch(zero, zero)),
            SpinInit::Down => Ok(bloch(T::PI(), zero)),
            SpinInit::PlusX => Ok(bloch(T::FRAC_PI_2(), zero)),
            SpinInit::Custom { theta, phi } => Ok(bloch(theta, phi)),
            SpinInit::AlongEff | SpinInit::OppositeEff => {
                let (bx, bz) = (d.epsilon, -d.dphi_dtau);
                if bx == zero && bz == zero {
                    return Err(QuantumError::Init(
                        "effective field vanishes at τ = 0; its direction is undefined".into(),
                    ));
                }
                let theta = bx.atan2(bz);
                let theta = if matches!(self, SpinInit::AlongEff) {
                    theta
                } else {
                    theta + T::PI()
                };
                Ok(bloch(theta, zero))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            SpinInit::Up => "up".into(),
            SpinInit::Down => "down".into(),
            SpinInit::PlusX => "plus_x".into(),
            SpinInit::AlongEff => "along_eff".into(),
            SpinInit::OppositeEff => "opposite_eff".into(),
            SpinInit::Custom { theta, phi } => format!("custom({theta},{phi})"),
        }
    }
}

/// `(cos θ/2, e^{iφ} sin θ/2)`
pub fn bloch<T: Real>(theta: T, phi: T) -> [Complex<T>; 2] {
    let half = theta / lit(2.0);
    [
        Complex::new(half.cos(), T::zero()),
        Complex::from_polar(half.sin(), phi),
    ]
}

/// Coherent state `|α⟩` of the cantilever.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentInit<T> {
    pub alpha: Complex<T>,
}

impl<T: Real> CoherentInit<T> {
    pub fn new(alpha: Complex<T>) -> Self {
        CoherentInit { alpha }
    }

    pub fn real(alpha: T) -> Self {
        CoherentInit {
            alpha: Complex::new(alpha, T::zero()),
        }
    }

    /// State with the given mean position and momentum.
    pub fn from_mean(z: T, p: T) -> Self {
        let s = T::SQRT_2();
        CoherentInit {
            alpha: Complex::new(z / s, p / s),
        }
    }

    /// `⟨z⟩ = (α* + α)/√2`
    pub fn mean_z(&self) -> T {
        T::SQRT_2() * self.alpha.re
    }

    /// `⟨p⟩ = i(α* - α)/√2`
    pub fn mean_p(&self) -> T {
        T::SQRT_2() * self.alpha.im
    }

    /// Mean occupation `|α|²`.
    pub fn mean_quanta(&self) -> T {
        self.alpha.norm_sqr()
    }

    /// Ground-state Gaussian displaced to `(⟨z⟩, ⟨p⟩)` evaluated at `z`
    /// (phase convention: real at `z = 0` up to `e^{i⟨p⟩z}`).
    pub fn amplitude(&self, z: T) -> Complex<T> {
        let z0 = self.mean_z();
        let p0 = self.mean_p();
        let norm = T::PI().powf(lit(-0.25));
        let d = z - z0;
        Complex::from_polar(norm * (-(d * d) / lit(2.0)).exp(), p0 * z)
    }
}

/// Builds the normalized product state `ψ_α(z) ⊗ χ` on `grid`.
pub fn init_state<T: Real>(
    grid: &GridSpec<T>,
    coherent: &CoherentInit<T>,
    spin: &SpinInit<T>,
    params: &SimParams<T>,
) -> Result<SpinorField<T>, QuantumError> {
    let width = T::FRAC_1_SQRT_2();
    if grid.dz() >= width / lit(4.0) {
        return Err(QuantumError::Grid(format!(
            "spacing {} does not resolve the coherent packet (need < {})",
            grid.dz(),
            width / lit(4.0)
        )));
    }
    let z0 = coherent.mean_z();
    let reach = lit::<T>(6.0);
    if z0 - reach < grid.z_min || z0 + reach > grid.z_max {
        return Err(QuantumError::Grid(format!(
            "packet centred at {z0} does not fit in [{}, {}]",
            grid.z_min, grid.z_max
        )));
    }
    grid.check_resolves(coherent.mean_p().abs() + lit(8.0))?;
    if coherent.mean_quanta() < lit(10.0) {
        log::warn!(
            "|α|² = {} is not ≫ 1; the cantilever starts far from the classical limit",
            coherent.mean_quanta()
        );
    }
    let drive = params.drive(T::zero())?;
    let chi = spin.spinor(&drive)?;
    let mut state = SpinorField::zeros(*grid, T::zero());
    for i in 0..grid.n_points {
        let a = coherent.amplitude(grid.z(i));
        state.psi1[i] = a * chi[0];
        state.psi2[i] = a * chi[1];
    }
    state.normalize();
    Ok(state)
}

/// `(|1 - norm|, probability in the outer 5% of the grid at each end)`.
pub fn leakage<T: Real>(state: &SpinorField<T>) -> (T, T) {
    let defect = (T::one() - state.norm() - state.absorbed).abs();
    let n = state.grid.n_points;
    let band = state.grid.edge_band(lit(0.05));
    let dz = state.grid.dz();
    let dens = |i: usize| state.psi1[i].norm_sqr() + state.psi2[i].norm_sqr();
    let edge: T = (0..band).chain(n - band..n).map(dens).sum();
    (defect, edge * dz)
}
