//! Scalar abstraction shared by every probability kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::{Product, Sum};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the chain, observation and filter code is generic over.
///
/// `PROB_TOL` is the absolute tolerance used when validating that a vector or
/// matrix row is a probability distribution.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Product + Debug + Display + Send + Sync + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const PROB_TOL: Self;

    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($f:ty, $tol:expr) => {
        impl Real for $f {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const PROB_TOL: Self = $tol;

            #[inline]
            fn of(x: f64) -> Self {
                x as $f
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, 1e-5);
impl_real!(f64, 1e-12);

pub(crate) fn sum<R: Real>(xs: &[R]) -> R {
    xs.iter().copied().sum()
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax<R: Real>(xs: &[R]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
