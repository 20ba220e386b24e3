//! Scalar abstraction shared by every numerical routine.

use nalgebra as na;
use num_traits as nt;

/// Floating point type the library is generic over (f32 or f64).
pub trait Real:
    na::RealField + Copy + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + Send + Sync
{
    /// Machine epsilon.
    const EPS: Self;
    /// Smallest positive normal number, used as a magnitude floor.
    const TINY: Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            const EPS: Self = <$t>::EPSILON;
            const TINY: Self = <$t>::MIN_POSITIVE;
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Converts an f64 literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts `T` to f64 for diagnostics and error payloads.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize representable in scalar type")
}

#[inline]
pub fn from_i64<T: Real>(n: i64) -> T {
    T::from_i64(n).expect("i64 representable in scalar type")
}

pub type Complex<T> = na::Complex<T>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// Returns `e^{i phi}`.
#[inline]
pub fn cis<T: Real>(phi: T) -> Complex<T> {
    Complex::new(phi.cos(), phi.sin())
}

/// Largest absolute value in a slice (0 for an empty slice).
pub fn max_abs<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}
