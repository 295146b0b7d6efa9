//! Floating-point abstraction used throughout the crate.
//!
//! Everything numeric is generic over [`Scalar`] so the same code runs in
//! `f32` and `f64`. Benchmarks and shipped defaults use `f64`; the `f32`
//! instantiation exists to keep the numerics honest (tests exercise both).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};

/// Scalar type for all densities, states and metrics.
///
/// Extends [`num_traits::Float`] with the two RNG draws the samplers need,
/// so callers never have to thread `rand_distr` bounds through signatures.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + std::iter::Sum
    + for<'a> std::iter::Sum<&'a Self>
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Draw from the standard normal.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw uniformly from `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lift an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for the finite constants used in this crate.
    fn lit(v: f64) -> Self {
        num_traits::FromPrimitive::from_f64(v).expect("literal not representable")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite scalar converts to f64")
    }

    fn from_usize_exact(n: usize) -> Self {
        num_traits::FromPrimitive::from_usize(n).expect("usize not representable")
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardUniform.sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
