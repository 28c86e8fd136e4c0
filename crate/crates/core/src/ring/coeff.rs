use std::fmt::{Debug, Display};
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Coefficient ring for group-ring elements.
///
/// All supported coefficient rings are real, so conjugation is the
/// identity; it is kept in the trait so that `star` reads like its formula.
pub trait Coeff:
    Clone
    + Debug
    + Display
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    /// Whether values are exact integers.
    const INTEGRAL: bool;

    fn conj(&self) -> Self {
        self.clone()
    }

    fn to_f64(&self) -> f64;

    fn from_i64(v: i64) -> Self;

    /// Exact conversion to `i64`, if the value is an integer in range.
    fn to_i64_exact(&self) -> Option<i64>;
}

impl Coeff for BigInt {
    const INTEGRAL: bool = true;

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }

    fn to_i64_exact(&self) -> Option<i64> {
        self.to_i64()
    }
}

impl Coeff for BigRational {
    const INTEGRAL: bool = false;

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_i64_exact(&self) -> Option<i64> {
        if self.is_integer() {
            self.to_integer().to_i64()
        } else {
            None
        }
    }
}

impl Coeff for f64 {
    const INTEGRAL: bool = false;

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn to_i64_exact(&self) -> Option<i64> {
        (self.fract() == 0.0 && self.abs() < 9.007_199_254_740_992e15).then_some(*self as i64)
    }
}
