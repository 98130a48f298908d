//! Scalar abstraction for the numerical core.
//!
//! Everything in this crate is generic over [`Real`], which is implemented
//! for `f32` and `f64`. The CLI and the reference aliases at the crate root
//! pin `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar usable throughout the model, sampler and simulator.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Largest |x| accepted by [`crate::geometry::checked_exp`].
    ///
    /// Exponents beyond this bound would overflow (or come close enough that
    /// downstream products do), so they are reported as invalid state instead
    /// of turning into infinities.
    fn exp_guard() -> Self;

    /// One draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from U[0, 1).
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Conversion for literal constants. Panics only if the target type
    /// cannot represent any finite `f64`, which does not happen for the
    /// provided impls.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }
}

impl Real for f64 {
    fn exp_guard() -> Self {
        700.0
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random()
    }
}

impl Real for f32 {
    fn exp_guard() -> Self {
        // f32 overflows at exp(~88.7); keep the same safety margin that
        // 700 leaves for f64.
        80.0
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random()
    }
}
