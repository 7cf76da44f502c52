use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the numeric modules are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal, saturating to infinity when out of range.
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| if x > 0.0 { Self::infinity() } else { Self::neg_infinity() })
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic function evaluated without overflow for any finite margin.
pub fn sigmoid<T: Scalar>(m: T) -> T {
    if m >= T::zero() {
        T::one() / (T::one() + (-m).exp())
    } else {
        let e = m.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(-m))`, stable for large positive and negative margins.
pub fn log1p_exp_neg<T: Scalar>(m: T) -> T {
    if m > T::zero() {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}
