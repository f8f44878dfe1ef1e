//! Floating-point abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Scalar type the numeric core is generic over.
///
/// Implemented for `f32` and `f64`. The crate-root aliases pin `f64` for the
/// tracking pipeline; `f32` remains available for memory-bound uses.
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant, panicking only on non-representable input.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    /// One draw from the standard normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw from `[0, 1)`.
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw from `[-half_width, half_width]`.
    fn uniform_symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: Self) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.gen::<$t>()
            }

            fn uniform_symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: Self) -> Self {
                rng.gen_range(-half_width..=half_width)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
