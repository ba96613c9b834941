//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Unit roundoff of the type.
    const EPS: Self;

    /// Converts an `f64` literal. Values outside the type's range saturate.
    fn lit(x: f64) -> Self;

    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
}

pub type C<T> = Complex<T>;

/// Neumaier-compensated sum; the result does not depend on how the terms
/// were produced, only on their order.
pub(crate) fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(terms: I) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp = comp + ((sum - t) + x);
        } else {
            comp = comp + ((x - t) + sum);
        }
        sum = t;
    }
    sum + comp
}
