//! Scalar abstraction: the whole library is generic over the floating point
//! type through [`Real`], with `f64` as the tested precision.

use std::fmt::{Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable everywhere in the crate: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + rustfft::FftNum + Display + LowerExp
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for converting an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must convert into the scalar type")
}

/// Complex number over the working scalar.
pub type C<T> = num_complex::Complex<T>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_convert_for_both_widths() {
        assert_eq!(lit::<f64>(0.25), 0.25);
        assert_eq!(lit::<f32>(0.25), 0.25f32);
        assert!(lit::<f64>(f64::INFINITY).is_infinite());
    }
}
