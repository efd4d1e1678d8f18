//! Scalar abstraction over the two floating point widths.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating point scalar: f32 or f64.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts from f64, rounding as needed.
    #[inline]
    fn cast(v: f64) -> Self {
        num_traits::NumCast::from(v).unwrap()
    }

    /// Widens to f64.
    #[inline]
    fn f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
