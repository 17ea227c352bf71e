//! Floating-point abstraction for the numeric core.
//!
//! Model fitting, selection, and evaluation are generic over [`Scalar`] so the
//! same code runs in `f32` or `f64`. The pipeline types exported at the crate
//! root fix the scalar to `f64`.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; total for finite inputs.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count converts to scalar")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::from_f64_lossy(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::from_count(3), 3.0);
        assert_eq!(f32::from_f64_lossy(0.25), 0.25f32);
        assert_eq!(f64::two(), 2.0);
        assert_eq!(f32::half(), 0.5f32);
    }
}
