//! Scalar abstraction for the transfer-matrix and calibration math.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the core math is generic over: f32 or f64.
pub trait Real:
    Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + std::iter::Sum + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + std::iter::Sum + 'static
{
}

/// Shorthand for pulling f64 literals into the generic scalar type.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal not representable in scalar type")
}

/// Reduce an angle to [0, 2*pi).
pub fn wrap_angle<T: Real>(phi: T) -> T {
    let tau = lit::<T>(std::f64::consts::TAU);
    let mut p = phi % tau;
    if p < T::zero() {
        p = p + tau;
    }
    // `phi % tau` can round up to tau itself for tiny negative inputs.
    if p >= tau {
        p = p - tau;
    }
    p
}
