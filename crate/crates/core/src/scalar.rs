//! Floating-point scalar abstraction shared by the distribution, clustering
//! and statistics code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Tolerance used when checking that a probability vector sums to one.
    ///
    /// `1e-9` for `f64`; types with less precision get a proportionally
    /// wider tolerance so valid inputs are not rejected for rounding.
    fn normalization_tolerance() -> Self {
        let floor = Self::from_f64(1e-9).unwrap();
        let scaled = Self::epsilon() * Self::from_f64(128.0).unwrap();
        if scaled > floor {
            scaled
        } else {
            floor
        }
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap()
    }

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_per_precision() {
        assert_eq!(f64::normalization_tolerance(), 1e-9);
        assert!(f32::normalization_tolerance() > 1e-6);
    }
}
