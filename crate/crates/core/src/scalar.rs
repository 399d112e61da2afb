use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar driving the transfer-matrix engines: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Sum + Send + Sync + 'static {
    /// Converts an `f64` constant, rounding to the target precision.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Natural log of `sum(values)` where the values are nonnegative weights.
pub(crate) fn ln_sum<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>().ln()
}

/// Scales `values` so that the largest entry equals one and returns the log of the factor removed.
///
/// A layer whose maximum is zero or non-finite is left untouched and reports `-inf`/`nan`
/// through the returned log factor.
pub(crate) fn rescale_max<T: Scalar>(values: &mut [T]) -> T {
    let max = values.iter().copied().fold(T::zero(), T::max);
    if max > T::zero() && max.is_finite() {
        for v in values.iter_mut() {
            *v = *v / max;
        }
    }
    max.ln()
}
