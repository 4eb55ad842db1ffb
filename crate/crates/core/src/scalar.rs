//! Numeric backends for the agreement statistics.
//!
//! All statistics are written once against [`Scalar`]; `f64` is the reporting
//! backend and the rational types give exact results for checks that need
//! bitwise equality.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, ToPrimitive};

pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// Exact embedding of a count.
    fn from_count(n: u64) -> Self;

    fn to_f64(&self) -> f64;

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }
}

macro_rules! float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn from_count(n: u64) -> Self {
                n as $t
            }

            fn to_f64(&self) -> f64 {
                f64::from(*self)
            }
        }
    )*};
}

float_scalar!(f32, f64);

macro_rules! ratio_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for Ratio<$t> {
            fn from_count(n: u64) -> Self {
                Ratio::from_integer(<$t>::try_from(n).expect("count exceeds rational backend range"))
            }

            fn to_f64(&self) -> f64 {
                ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
            }
        }
    )*};
}

ratio_scalar!(i64, i128);

impl Scalar for BigRational {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact() {
        let a = <Ratio<i64>>::ratio(3, 10);
        assert_eq!(a, Ratio::new(3, 10));
        assert_eq!(Scalar::to_f64(&a), 0.3);
        let b = BigRational::ratio(1, 3) * BigRational::from_count(3);
        assert_eq!(b, BigRational::from_count(1));
    }
}
