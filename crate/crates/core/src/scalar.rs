use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the numerics are written against: `f32` or `f64`.
///
/// Every tolerance in this crate is calibrated for `f64`; `f32` instances are
/// usable for the plumbing (grids, quadrature, closed-form kernels) but will not
/// meet the solver tolerances.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log Σ exp(x_i)`, stable; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<S: Scalar>(xs: impl IntoIterator<Item = S> + Clone) -> S {
    let max = xs.clone().into_iter().fold(S::neg_infinity(), |acc, x| if x > acc { x } else { acc });
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `x log x` with `0 log 0 = 0`.
#[inline]
pub fn xlogx<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x * x.ln()
    } else {
        S::zero()
    }
}
