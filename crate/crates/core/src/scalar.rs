//! Scalar abstraction shared by every numerical module.
//!
//! All solvers are written against [`Real`], which is implemented for `f32`
//! and `f64`. The crate root re-exports `f64` aliases for everyday use.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Display, LowerExp};
use std::iter::Sum;

/// Floating point type usable by the propagators, the analysis routines and
/// the classical integrator.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + rustfft::FftNum
    + ode_solvers::dop_shared::FloatNumber
    + Display
    + LowerExp
    + Sum
    + Default
{
    /// Machine epsilon as the generic type.
    fn eps() -> Self {
        <Self as Float>::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the generic scalar.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a generic scalar into `f64` (for reporting and serialization).
#[inline(always)]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}

/// Converts a count into the generic scalar.
#[inline(always)]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}
