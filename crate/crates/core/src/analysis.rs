//! Observables extracted from spinor snapshots: moments, spin expectations,
//! two-peak (cat state) decomposition, branching ratios and the phase of the
//! cantilever oscillation.
//!
//! Expectation values are conditional on the probability still on the grid:
//! they are divided by the current norm, which stays below one only when an
//! absorbing boundary removed part of the state.

use crate::quantum::SpinorField;
use crate::scalar::{from_usize, lit, Real};
use num_complex::Complex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("peak supports overlap: [{0}, {1}] and [{2}, {3}]")]
    Overlap(usize, usize, usize, usize),
    #[error("not enough samples: {0}")]
    InsufficientSamples(String),
}

/// Default peak detection threshold relative to the density maximum.
pub const DEFAULT_PEAK_THRESHOLD: f64 = 1e-8;
/// Relative rms residual above which a phase fit is flagged.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables<T> {
    pub tau: T,
    pub norm: T,
    pub mean_z: T,
    /// `Δ = (⟨z²⟩ - ⟨z⟩²)^{1/2}`
    pub std_z: T,
    pub spin_expect: [T; 3],
    pub pop_up: T,
    pub pop_down: T,
}

/// `ρ_ab = ∫ Ψ_a Ψ_b* dz` over grid nodes `range`.
pub fn spin_density_matrix<T: Real>(
    state: &SpinorField<T>,
    range: std::ops::Range<usize>,
) -> [[Complex<T>; 2]; 2] {
    let zero = Complex::new(T::zero(), T::zero());
    let (mut r11, mut r22, mut r12) = (T::zero(), T::zero(), zero);
    for i in range {
        let (a, b) = (state.psi1[i], state.psi2[i]);
        r11 = r11 + a.norm_sqr();
        r22 = r22 + b.norm_sqr();
        r12 = r12 + a * b.conj();
    }
    let dz = state.grid.dz();
    let r12 = r12 * dz;
    [
        [Complex::new(r11 * dz, T::zero()), r12],
        [r12.conj(), Complex::new(r22 * dz, T::zero())],
    ]
}

/// `⟨S⟩` of a (not necessarily normalized) 2×2 density matrix, divided by
/// its trace.
pub fn spin_vector<T: Real>(rho: &[[Complex<T>; 2]; 2]) -> [T; 3] {
    let tr = rho[0][0].re + rho[1][1].re;
    if !(tr > T::zero()) {
        return [T::zero(); 3];
    }
    // ρ₁₂ = ⟨Ψ₁ Ψ₂*⟩, ⟨σx⟩ = 2 Re ρ₂₁, ⟨σy⟩ = 2 Im ρ₂₁
    let r21 = rho[1][0];
    [r21.re / tr, r21.im / tr, (rho[0][0].re - rho[1][1].re) / (tr + tr)]
}

pub fn observables<T: Real>(state: &SpinorField<T>) -> Observables<T> {
    let n = state.grid.n_points;
    let dz = state.grid.dz();
    let (mut m0, mut m1) = (T::zero(), T::zero());
    for i in 0..n {
        let d = state.psi1[i].norm_sqr() + state.psi2[i].norm_sqr();
        m0 = m0 + d;
        m1 = m1 + d * state.grid.z(i);
    }
    let norm = m0 * dz;
    let local_mean = if m0 > T::zero() { m1 / m0 } else { T::zero() };
    // second moment about the mean for accuracy at large |⟨z⟩|
    let mut m2 = T::zero();
    for i in 0..n {
        let d = state.psi1[i].norm_sqr() + state.psi2[i].norm_sqr();
        let y = state.grid.z(i) - local_mean;
        m2 = m2 + d * y * y;
    }
    let var = if m0 > T::zero() { m2 / m0 } else { T::zero() };
    let rho = spin_density_matrix(state, 0..n);
    let tr = rho[0][0].re + rho[1][1].re;
    let (pop_up, pop_down) = if tr > T::zero() {
        (rho[0][0].re / tr, rho[1][1].re / tr)
    } else {
        (T::zero(), T::zero())
    };
    Observables {
        tau: state.tau,
        norm,
        mean_z: local_mean + state.frame.z_shift,
        std_z: var.max(T::zero()).sqrt(),
        spin_expect: spin_vector(&rho),
        pop_up,
        pop_down,
    }
}

/// Pointwise densities on the laboratory positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Densities<T> {
    pub z: Vec<T>,
    /// `|Ψ₁|² + |Ψ₂|²`
    pub p: Vec<T>,
    pub p1: Vec<T>,
    pub p2: Vec<T>,
}

pub fn density<T: Real>(state: &SpinorField<T>) -> Densities<T> {
    let p1: Vec<T> = state.psi1.iter().map(|c| c.norm_sqr()).collect();
    let p2: Vec<T> = state.psi2.iter().map(|c| c.norm_sqr()).collect();
    let p = p1.iter().zip(&p2).map(|(a, b)| *a + *b).collect();
    Densities {
        z: state.positions(),
        p,
        p1,
        p2,
    }
}

/// Contiguous run of grid nodes `lo..=hi` above the detection threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSupport<T> {
    pub lo: usize,
    pub hi: usize,
    pub z_lo: T,
    pub z_hi: T,
    /// `∫ P dz` over the support.
    pub weight: T,
    pub centroid: T,
}

impl<T> PeakSupport<T> {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.lo..self.hi + 1
    }
}

/// Connected components of `{P > threshold_frac · max P}`, merged across
/// gaps of fewer than three nodes, sorted by decreasing weight. `z` holds
/// the (uniformly spaced) node positions.
pub fn detect_peaks<T: Real>(
    p: &[T],
    z: &[T],
    threshold_frac: T,
) -> Result<Vec<PeakSupport<T>>, AnalysisError> {
    if !(threshold_frac > T::zero() && threshold_frac < T::one()) {
        return Err(AnalysisError::Invalid(format!(
            "threshold fraction must lie in (0, 1), got {threshold_frac}"
        )));
    }
    if p.len() != z.len() || p.len() < 2 {
        return Err(AnalysisError::Invalid(
            "density and positions must have equal length ≥ 2".into(),
        ));
    }
    let max = p.iter().fold(T::zero(), |m, v| m.max(*v));
    if !(max > T::zero()) {
        return Ok(Vec::new());
    }
    let cut = threshold_frac * max;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, v) in p.iter().enumerate() {
        match (*v > cut, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, p.len() - 1));
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (lo, hi) in runs {
        match merged.last_mut() {
            // fewer than three nodes strictly between the runs
            Some(last) if lo - last.1 - 1 < 3 => last.1 = hi,
            _ => merged.push((lo, hi)),
        }
    }
    let dz = z[1] - z[0];
    let mut peaks: Vec<PeakSupport<T>> = merged
        .into_iter()
        .map(|(lo, hi)| {
            let (mut w, mut m) = (T::zero(), T::zero());
            for i in lo..=hi {
                w = w + p[i];
                m = m + p[i] * z[i];
            }
            PeakSupport {
                lo,
                hi,
                z_lo: z[lo],
                z_hi: z[hi],
                weight: w * dz,
                centroid: if w > T::zero() { m / w } else { z[lo] },
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
    Ok(peaks)
}

/// Restriction of the spinor to one peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakPart<T> {
    pub support: PeakSupport<T>,
    /// Dominant spin state on the support (unit norm, first nonzero
    /// component real and non-negative).
    pub chi: [Complex<T>; 2],
    /// `⟨S⟩` of the restricted state, per unit weight.
    pub spin: [T; 3],
    /// Fraction of the restricted weight outside `chi` (0 for a product).
    pub impurity: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakDecomposition<T> {
    pub big: PeakPart<T>,
    pub small: PeakPart<T>,
    /// Least-squares `Ψ₁ˢ ≈ κ Ψ₂ˢ` on the small peak.
    pub kappa_complex: Complex<T>,
    /// `|Ψ₁ˢ - κΨ₂ˢ| / |Ψ₁ˢ|` (rms over the small support).
    pub kappa_residual: T,
    /// `|Im κ| / |κ|`.
    pub kappa_imag_ratio: T,
    /// Least-squares `Ψ₂ᵇ ≈ -κ' Ψ₁ᵇ` on the big peak, for consistency.
    pub kappa_big: Complex<T>,
    /// `|⟨χᵇ|χˢ⟩|`
    pub overlap: T,
}

impl<T: Real> PeakDecomposition<T> {
    pub fn kappa(&self) -> T {
        self.kappa_complex.re
    }

    pub fn weight_ratio(&self) -> T {
        self.small.support.weight / self.big.support.weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decomposition<T> {
    /// Only one peak carries weight.
    Single(PeakPart<T>),
    Split(PeakDecomposition<T>),
}

impl<T: Real> Decomposition<T> {
    pub fn split(&self) -> Option<&PeakDecomposition<T>> {
        match self {
            Decomposition::Split(d) => Some(d),
            Decomposition::Single(_) => None,
        }
    }
}

fn peak_part<T: Real>(state: &SpinorField<T>, support: PeakSupport<T>) -> PeakPart<T> {
    let rho = spin_density_matrix(state, support.range());
    let (a, d, b) = (rho[0][0].re, rho[1][1].re, rho[0][1]);
    let tr = a + d;
    let half = lit::<T>(0.5);
    let disc = ((a - d) * (a - d) * half * half + b.norm_sqr()).sqrt();
    let top = (a + d) * half + disc;
    // eigenvector of [[a, b], [b*, d]] for the eigenvalue `top`
    let v = if a >= d {
        [Complex::new(top - d, T::zero()), b.conj()]
    } else {
        [b, Complex::new(top - a, T::zero())]
    };
    let vn = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let chi = if vn > T::zero() {
        canonical_phase([v[0] / vn, v[1] / vn])
    } else {
        [Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero())]
    };
    PeakPart {
        support,
        chi,
        spin: spin_vector(&rho),
        impurity: if tr > T::zero() {
            (T::one() - top / tr).max(T::zero())
        } else {
            T::zero()
        },
    }
}

fn canonical_phase<T: Real>(v: [Complex<T>; 2]) -> [Complex<T>; 2] {
    let lead = if v[0].norm_sqr() > T::zero() { v[0] } else { v[1] };
    let r = lead.norm();
    if r > T::zero() {
        let rot = lead.conj() / r;
        [v[0] * rot, v[1] * rot]
    } else {
        v
    }
}

/// Splits the state into the heaviest and second-heaviest of `peaks`.
/// Falls back to [`Decomposition::Single`] when fewer than two peaks carry
/// weight.
pub fn decompose<T: Real>(
    state: &SpinorField<T>,
    peaks: &[PeakSupport<T>],
) -> Result<Decomposition<T>, AnalysisError> {
    if peaks.is_empty() {
        return Err(AnalysisError::Invalid("no peaks to decompose".into()));
    }
    for (i, a) in peaks.iter().enumerate() {
        if a.hi >= state.grid.n_points {
            return Err(AnalysisError::Invalid("peak support outside the grid".into()));
        }
        for b in &peaks[i + 1..] {
            if a.lo <= b.hi && b.lo <= a.hi {
                return Err(AnalysisError::Overlap(a.lo, a.hi, b.lo, b.hi));
            }
        }
    }
    let mut order: Vec<&PeakSupport<T>> = peaks.iter().collect();
    order.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
    let big = peak_part(state, *order[0]);
    let small_support = match order.get(1) {
        Some(s) if s.weight > T::zero() => **s,
        _ => return Ok(Decomposition::Single(big)),
    };
    let small = peak_part(state, small_support);

    let zero = Complex::new(T::zero(), T::zero());
    let (mut num, mut den) = (zero, T::zero());
    for i in small_support.range() {
        num = num + state.psi2[i].conj() * state.psi1[i];
        den = den + state.psi2[i].norm_sqr();
    }
    if !(den > T::zero()) {
        return Ok(Decomposition::Single(big));
    }
    let kappa = num / den;
    let (mut res, mut ref1) = (T::zero(), T::zero());
    for i in small_support.range() {
        res = res + (state.psi1[i] - kappa * state.psi2[i]).norm_sqr();
        ref1 = ref1 + state.psi1[i].norm_sqr();
    }
    let kappa_residual = if ref1 > T::zero() {
        (res / ref1).sqrt()
    } else {
        T::zero()
    };
    let (mut nb, mut db) = (zero, T::zero());
    for i in big.support.range() {
        nb = nb + state.psi1[i].conj() * state.psi2[i];
        db = db + state.psi1[i].norm_sqr();
    }
    let kappa_big = if db > T::zero() { -(nb / db) } else { zero };
    let overlap = (big.chi[0].conj() * small.chi[0] + big.chi[1].conj() * small.chi[1]).norm();
    let kn = kappa.norm();
    Ok(Decomposition::Split(PeakDecomposition {
        big,
        small,
        kappa_complex: kappa,
        kappa_residual,
        kappa_imag_ratio: if kn > T::zero() { kappa.im.abs() / kn } else { T::zero() },
        kappa_big,
        overlap,
    }))
}

/// Small-to-big integrated weight ratio.
pub fn branching_ratio<T: Real>(dec: &PeakDecomposition<T>) -> T {
    dec.weight_ratio()
}

/// Ratio of the populations of the spin eigenstates anti-parallel and
/// parallel to `axis`: `(1/2 - ⟨S⟩·n̂) / (1/2 + ⟨S⟩·n̂)`.
pub fn spin_branching<T: Real>(state: &SpinorField<T>, axis: [T; 3]) -> T {
    let s = spin_vector(&spin_density_matrix(state, 0..state.grid.n_points));
    let n = norm3(axis);
    let proj = dot3(s, axis) / n;
    let half = lit::<T>(0.5);
    (half - proj) / (half + proj)
}

/// `tan²(Θ/2)`.
pub fn tilt_branching<T: Real>(theta: T) -> T {
    let t = (theta / lit(2.0)).tan();
    t * t
}

pub fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3<T: Real>(a: [T; 3]) -> T {
    dot3(a, a).sqrt()
}

/// Angle between two 3-vectors in `[0, π]` (π/2 when either vanishes).
pub fn angle_between<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let (s, c) = (norm3(cross), dot3(a, b));
    if s == T::zero() && c == T::zero() {
        return T::FRAC_PI_2();
    }
    s.atan2(c)
}

/// Result of fitting `z(τ) ≈ A(1 + b(τ - τ_c)) cos(τ + φ₀)`, `τ_c` the
/// window centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit<T> {
    pub amplitude: T,
    /// In `(-π, π]`.
    pub phase: T,
    /// Relative amplitude drift per unit τ.
    pub drift: T,
    pub window: (T, T),
    pub residual_rms: T,
    /// `residual_rms` divided by the rms of the data.
    pub relative_residual: T,
    pub samples: usize,
}

impl<T: Real> PhaseFit<T> {
    /// The fit does not describe an oscillation.
    pub fn is_flagged(&self) -> bool {
        !(self.relative_residual <= lit(FIT_RESIDUAL_LIMIT))
    }
}

/// Least-squares phase of `series` inside `window`. The window must span at
/// least three periods, sampled at 20 or more points per period.
pub fn fit_phase<T: Real>(series: &[(T, T)], window: (T, T)) -> Result<PhaseFit<T>, AnalysisError> {
    let (a, b) = window;
    let span = b - a;
    let three = lit::<T>(3.0) * T::TAU();
    if !(span >= three * (T::one() - lit(1e-9))) {
        return Err(AnalysisError::InsufficientSamples(format!(
            "window length {span} is shorter than three periods"
        )));
    }
    let pts: Vec<(T, T)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= a && *t <= b)
        .collect();
    let need = (lit::<T>(20.0) * span / T::TAU()).floor();
    if from_usize::<T>(pts.len()) < need {
        return Err(AnalysisError::InsufficientSamples(format!(
            "{} samples in the window, need {need} (20 per period)",
            pts.len()
        )));
    }
    let tc = (a + b) / lit(2.0);
    // basis: cos τ, sin τ, u cos τ, u sin τ with u = τ - τ_c
    let mut ata = nalgebra::Matrix4::<f64>::zeros();
    let mut atb = nalgebra::Vector4::<f64>::zeros();
    let f = |x: T| x.to_f64().unwrap();
    for (t, z) in &pts {
        let (s, c) = f(*t).sin_cos();
        let u = f(*t - tc);
        let row = nalgebra::Vector4::new(c, s, u * c, u * s);
        ata += row * row.transpose();
        atb += row * f(*z);
    }
    let coef = ata
        .cholesky()
        .ok_or_else(|| AnalysisError::InsufficientSamples("singular phase-fit system".into()))?
        .solve(&atb);
    let (c0, s0, c1, s1) = (coef[0], coef[1], coef[2], coef[3]);
    let amp = (c0 * c0 + s0 * s0).sqrt();
    let phase = (-s0).atan2(c0);
    // in-phase part of the slope terms gives the amplitude drift
    let drift = if amp > 0.0 {
        (c1 * c0 + s1 * s0) / (amp * amp)
    } else {
        0.0
    };
    let (mut ss, mut sd) = (0.0, 0.0);
    for (t, z) in &pts {
        let (s, c) = f(*t).sin_cos();
        let u = f(*t - tc);
        let model = c0 * c + s0 * s + u * (c1 * c + s1 * s);
        ss += (f(*z) - model).powi(2);
        sd += f(*z).powi(2);
    }
    let n = pts.len() as f64;
    let rms = (ss / n).sqrt();
    let data_rms = (sd / n).sqrt();
    let phase = if phase <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        phase
    };
    Ok(PhaseFit {
        amplitude: lit(amp),
        phase: lit(phase),
        drift: lit(drift),
        window,
        residual_rms: lit(rms),
        relative_residual: lit(if data_rms > 0.0 { rms / data_rms } else { f64::INFINITY }),
        samples: pts.len(),
    })
}

/// Difference of two phases wrapped into `[0, π]`.
pub fn phase_separation<T: Real>(a: T, b: T) -> T {
    let d = (a - b).abs() % T::TAU();
    if d > T::PI() {
        T::TAU() - d
    } else {
        d
    }
}

/// Largest `|z|` in consecutive windows of one period, starting at the first
/// sample. Returns `(window centre, max |z|)` for complete windows only.
pub fn period_envelope<T: Real>(series: &[(T, T)]) -> Vec<(T, T)> {
    let mut out = Vec::new();
    let Some(&(t0, _)) = series.first() else {
        return out;
    };
    let mut k = 0usize;
    let mut current = T::zero();
    for &(t, z) in series {
        let idx = ((t - t0) / T::TAU()).floor().to_usize().unwrap_or(0);
        while idx > k {
            let centre = t0 + T::TAU() * (from_usize::<T>(k) + lit(0.5));
            out.push((centre, current));
            current = T::zero();
            k += 1;
        }
        current = current.max(z.abs());
    }
    out
}
