//! Scalar abstraction for the rank-based kernels.
//!
//! The pieces of this crate that are genuinely scalar-type-agnostic — the
//! change-point statistics, the Hermite polynomial recurrence, the fGn
//! autocovariance displacement formula and the tent weight `psi_tau` — are
//! generic over [`Scalar`]. Everything tied to FFT plans, random sampling or
//! tolerance-pinned quadrature stays `f64` (see the crate root aliases).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the generic kernels (`f32`, `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-as-possible conversion from a replicate/count index.
    fn from_count(c: usize) -> Self {
        Self::from_usize(c).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<T>
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
