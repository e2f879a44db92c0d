//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All math is written against [`Scalar`], which is satisfied by `f32` and
//! `f64`. Monte Carlo draws are produced in `f64` and narrowed with [`lit`].

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point type usable by the library.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Display + 'static
{
}

impl<T> Scalar for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Display + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Machine epsilon of `T`.
#[inline]
pub fn epsilon<T: Scalar>() -> T {
    T::default_epsilon()
}
