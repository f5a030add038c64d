//! Scalar abstraction for passage times and increments.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type that passage times are accumulated in: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` sample.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    /// Widening conversion used by the statistics layer.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `|a - b| <= rel * max(|a|, |b|)`, with an absolute floor of `rel` near zero.
#[inline]
pub fn rel_close<T: Scalar>(a: T, b: T, rel: T) -> bool {
    let scale = a.abs().max(b.abs()).max(T::one());
    (a - b).abs() <= rel * scale
}
