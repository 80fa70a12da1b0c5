//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the models are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into the scalar type.
    fn lit(v: f64) -> Self;

    /// Widens to `f64` for reporting and serialization.
    fn as_f64(self) -> f64;

    /// Complementary error function.
    fn erfc(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

/// Per-step decay factor `e^{-1/tau}` of a first-order discrete filter.
#[inline]
pub fn decay<S: Scalar>(tau: f64) -> S {
    S::lit((-1.0 / tau).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_matches_exponential() {
        let d: f64 = decay(4.0);
        assert!((d - 0.778_800_783_071_404_9).abs() < 1e-15);
        let d32: f32 = decay(4.0);
        assert!((d32 as f64 - d).abs() < 1e-7);
    }

    #[test]
    fn tiny_tau_is_memoryless() {
        let d: f64 = decay(1e-3);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn erfc_at_zero_is_one() {
        assert_eq!(Scalar::erfc(0.0f64), 1.0);
        assert!((Scalar::erfc(0.0f32) - 1.0).abs() < 1e-7);
    }
}
