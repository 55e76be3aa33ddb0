//! Floating-point abstraction shared by the numerical kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the statistical kernels are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for constants and library CDF results.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn half() -> Self {
        Self::of(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean<T: Scalar>(xs: &[T]) -> T {
        xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
    }

    #[test]
    fn conversions_round_trip() {
        assert_eq!(mean(&[1.0f32, 2.0, 3.0]), 2.0);
        assert_eq!(mean(&[1.0f64, 2.0]), 1.5);
        assert_eq!(f32::of(0.25).as_f64(), 0.25);
        assert_eq!(f64::half(), 0.5);
    }
}
