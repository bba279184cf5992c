//! Floating point scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable by the rotation, solver and game code.
///
/// Implemented for `f32` and `f64`. The learning stack (network, search,
/// training) is fixed to `f64`; the matrix mechanics are generic so the
/// same code can be checked at both precisions.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Unit roundoff of the type.
    fn unit_roundoff() -> Self {
        Self::epsilon() / Self::two()
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    /// Lossy conversion from `f64`, used for tolerances and constants.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `sign(x)` with `sign(0) = +1`.
pub fn sign_nonzero<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}
