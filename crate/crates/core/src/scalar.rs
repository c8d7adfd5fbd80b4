//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point type the estimators, solver and metrics are generic over.
///
/// Implemented for `f32` and `f64`. `Display`/`FromStr` are required so that
/// panels and reports round-trip through text without losing bits.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the literal is not representable,
    /// which cannot happen for finite inputs to `f32`/`f64`.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Tolerance `base` widened to what this precision can actually resolve.
    fn tol(base: f64) -> Self {
        let floor = 64.0 * Self::epsilon().to_f64().unwrap_or(f64::EPSILON);
        Self::lit(base.max(floor))
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(<f64 as Scalar>::tol(1e-6), 1e-6);
        assert!(<f32 as Scalar>::tol(1e-10) > 1e-6);
    }
}
