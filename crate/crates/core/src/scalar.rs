//! Scalar abstractions.
//!
//! Storage, arithmetic and coarsening only need [`Scalar`], which exact
//! rationals satisfy. Anything that touches a spectrum (eigensolves, matrix
//! functions, resolvents, sampling) needs [`Real`], implemented for `f32`
//! and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumCast, Signed, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Entry type of a matrix: a signed ring element that can be shared across
/// workers.
pub trait Scalar:
    Num + Signed + FromPrimitive + Clone + PartialEq + Debug + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for BigRational {}

/// Floating point scalar with everything spectral code needs.
pub trait Real:
    Scalar
    + Float
    + FloatConst
    + ToPrimitive
    + NumCast
    + Copy
    + Display
    + Default
    + Sum
{
    /// One draw from the standard normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossless for `f64`, nearest for `f32`.
    fn from_f64_lossy(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("every f64 is representable after rounding")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Shorthand for a literal in generic code.
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64_lossy(x)
}
