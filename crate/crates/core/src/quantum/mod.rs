//! Spinor wavefunction on a position grid and its propagation under
//!
//! ```text
//! i ∂Ψ/∂τ = [p²/2 + z²/2 - B_eff(τ, z) · S] Ψ,   Ψ = (Ψ₁, Ψ₂)
//! ```
//!
//! plus a truncated number-basis propagator used as an independent check.

mod fock;
mod grid;
mod propagator;
mod state;

pub use fock::{coherent_coefficients, hermite_functions, oracle_propagate_fock, TRUNCATION_LIMIT};
pub use grid::GridSpec;
pub use propagator::{propagate, step, FrameMode, PropagatorOptions, SplitStep};
pub use state::{bloch, init_state, leakage, CoherentInit, Frame, SpinInit, SpinorField};

use crate::model::ModelError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid initial state: {0}")]
    Init(String),
    #[error("invalid propagation request: {0}")]
    Step(String),
    #[error("amplitudes became non-finite at τ = {tau}")]
    Blowup { tau: f64 },
    #[error("basis truncation leaks {leakage:e} of the probability at τ = {tau}")]
    Truncation { tau: f64, leakage: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}
