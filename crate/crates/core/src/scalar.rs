//! Host-side scalar types that decoded minifloat values can be rendered into.
//!
//! The datapath itself is pure integer arithmetic; these impls are for
//! presentation and for checking decoded values against independent formulas.

use std::fmt::Debug;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Float, One};

use crate::formats::FloatClass;

/// A scalar that can hold the value of a scaled integer `±m · 2^e`.
///
/// Floating hosts round (exact for every minifloat value handled here);
/// the rational host is always exact but has no infinities or NaN.
pub trait Scalar: Clone + PartialOrd + Debug {
    fn from_scaled(negative: bool, mantissa: u128, exp2: i32) -> Self;

    fn infinity(negative: bool) -> Option<Self>;

    fn nan() -> Option<Self>;
}

fn float_from_scaled<T: Float>(negative: bool, mantissa: u128, exp2: i32) -> T {
    let m = T::from(mantissa).expect("mantissa representable in host float");
    let two = T::one() + T::one();
    let v = m * two.powi(exp2);
    if negative {
        -v
    } else {
        v
    }
}

macro_rules! impl_float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn from_scaled(negative: bool, mantissa: u128, exp2: i32) -> Self {
                float_from_scaled(negative, mantissa, exp2)
            }

            fn infinity(negative: bool) -> Option<Self> {
                Some(if negative { <$t>::NEG_INFINITY } else { <$t>::INFINITY })
            }

            fn nan() -> Option<Self> {
                Some(<$t>::NAN)
            }
        }
    )*};
}

impl_float_scalar!(f32, f64);

impl Scalar for BigRational {
    fn from_scaled(negative: bool, mantissa: u128, exp2: i32) -> Self {
        let m = BigInt::from(mantissa);
        let m = if negative { -m } else { m };
        let shift = BigInt::from(BigUint::one() << exp2.unsigned_abs());
        if exp2 >= 0 {
            BigRational::from_integer(m * shift)
        } else {
            BigRational::new(m, shift)
        }
    }

    fn infinity(_negative: bool) -> Option<Self> {
        None
    }

    fn nan() -> Option<Self> {
        None
    }
}

/// One row of a format's value table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueRow<T> {
    pub bits: u8,
    pub class: FloatClass,
    /// `None` when the host scalar cannot represent the class (NaN/Inf in
    /// an exact rational).
    pub value: Option<T>,
}

/// Zero of any scalar, through the scaled-integer constructor.
pub fn zero<T: Scalar>(negative: bool) -> T {
    T::from_scaled(negative, 0, 0)
}
