//! Scalar abstraction for probabilities and moments.
//!
//! Every exact computation in the crate (laws, moments, the spine recursions and the
//! extinction criteria) is written against [`Scalar`], so models can be evaluated in
//! `f64` (the default everywhere) or in `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type usable as a probability / moment scalar.
pub trait Scalar:
    Float
    + FloatConst
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
    /// Normalization tolerance for probability sums and boundary comparisons.
    const TOLERANCE: f64;

    fn tol() -> Self {
        Self::from_f64(Self::TOLERANCE).expect("tolerance representable")
    }

    /// Lossy conversion from an `f64` literal or intermediate.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    fn of_u64(x: u64) -> Self {
        Self::from_u64(x).expect("u64 representable as float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    const TOLERANCE: f64 = 1e-12;
}

impl Scalar for f32 {
    // 1e-12 is below f32 resolution; a few ulps of 1.0 is the matching band.
    const TOLERANCE: f64 = 1e-5;
}

/// Neumaier-compensated sum.
pub fn compensated_sum<S: Scalar, I: IntoIterator<Item = S>>(terms: I) -> S {
    let mut sum = S::zero();
    let mut carry = S::zero();
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry = carry + ((sum - t) + x);
        } else {
            carry = carry + ((x - t) + sum);
        }
        sum = t;
    }
    sum + carry
}

/// `x * ln(x)` with the convention `0 ln 0 = 0`.
pub fn xlnx<S: Scalar>(x: S) -> S {
    if x == S::zero() {
        S::zero()
    } else {
        x * x.ln()
    }
}

/// `x^theta` with `0^0 = 1` and `0^theta = 0` for `theta > 0`.
pub fn pow_convention<S: Scalar>(x: S, theta: S) -> S {
    if x == S::zero() {
        if theta == S::zero() {
            S::one()
        } else {
            S::zero()
        }
    } else {
        x.powf(theta)
    }
}
