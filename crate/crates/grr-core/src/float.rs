//! Scalar abstraction for the numeric core.
//!
//! Everything downstream is generic over [`Float`], which bundles the
//! `num-traits` surface with the ndarray and serde bounds the library needs.
//! `f64` is the working type for the solvers and the simulation lab; `f32`
//! is supported for callers that want it.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar usable throughout the crate.
pub trait Float:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Serialize
    + DeserializeOwned
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless for f64, rounded for f32. Constants in the algorithms are
    /// written as f64 literals and funneled through here.
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    fn cast_usize(n: usize) -> Self {
        num_traits::FromPrimitive::from_usize(n).expect("usize representable as float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float convertible to f64")
    }
}

impl Float for f32 {}
impl Float for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_generic<F: Float>(xs: &[F]) -> F {
        xs.iter().copied().sum()
    }

    #[test]
    fn both_scalar_types_satisfy_the_trait() {
        assert_eq!(sum_generic(&[1.0f64, 2.0, 3.0]), 6.0);
        assert_eq!(sum_generic(&[1.0f32, 2.0, 3.0]), 6.0);
        assert_eq!(f64::cast(0.5), 0.5);
        assert_eq!(f64::cast_usize(7), 7.0);
    }
}
