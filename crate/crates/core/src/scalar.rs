//! Scalar abstraction shared by the graph and conic layers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the generic algorithms run on: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Widening conversion used when reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Scalars the interior-point backend can work with.
pub trait ConicScalar: Scalar + clarabel::algebra::FloatT {}

impl<T> ConicScalar for T where T: Scalar + clarabel::algebra::FloatT {}

/// Relative comparison `a <= b` with slack `tol * max(1, |a|, |b|)`.
pub fn approx_le<T: Scalar>(a: T, b: T, tol: T) -> bool {
    let scale = T::one().max(a.abs()).max(b.abs());
    a <= b + tol * scale
}
