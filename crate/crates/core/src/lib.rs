//! Quantum dynamics of a single spin-1/2 coupled to a quasiclassical
//! cantilever under cyclic adiabatic inversion, with a classical-limit solver
//! and analysis tools for Schrödinger-cat formation and phase readout.

pub mod analysis;
pub mod classical;
pub mod cli;
pub mod model;
pub mod quantum;
pub mod scalar;

pub use scalar::Real;

/// Double-precision aliases of the generic types.
pub type SimParams = model::SimParams<f64>;
pub type DriveSchedule = model::DriveSchedule<f64>;
pub type GridSpec = quantum::GridSpec<f64>;
pub type SpinorField = quantum::SpinorField<f64>;
pub type CoherentInit = quantum::CoherentInit<f64>;
pub type SpinInit = quantum::SpinInit<f64>;
pub type SplitStep = quantum::SplitStep<f64>;
pub type Observables = analysis::Observables<f64>;
pub type PeakDecomposition = analysis::PeakDecomposition<f64>;
pub type PhaseFit = analysis::PhaseFit<f64>;
pub type ClassicalState = classical::ClassicalState<f64>;
pub type Trajectory = classical::Trajectory<f64>;
