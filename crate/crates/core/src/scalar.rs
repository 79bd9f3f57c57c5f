//! Scalar abstraction: all numeric code in this crate is generic over a
//! floating-point type implementing [`Scalar`] (`f32` or `f64`).

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};

/// Floating-point scalar used throughout the crate.
///
/// Experiments and the gradient-check suite run at `f64`; `f32` is supported
/// for callers that trade precision for footprint.
pub trait Scalar:
    Float
    + FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant, panicking on failure (never fails for f32/f64).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }

    /// Lossy conversion to `f64` for reporting.
    fn to_f64_lossy(self) -> f64;

    /// Draw from the standard normal distribution N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw uniformly from [0, 1).
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardUniform.sample(rng)
    }
}

impl Scalar for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardUniform.sample(rng)
    }
}

/// Numerically stable logistic function, exact in both tails.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Derivative of the logistic function at `x`: sigma(x) * (1 - sigma(x)).
pub fn sigmoid_derivative<S: Scalar>(x: S) -> S {
    let s = sigmoid(x);
    s * (S::one() - s)
}

/// Inverse of the logistic function. Input must lie strictly in (0, 1).
pub fn logit<S: Scalar>(p: S) -> S {
    (p / (S::one() - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(sigmoid_derivative(0.0f64), 0.25);
        assert!(sigmoid(20.0f64) > 1.0 - 1e-8);
        assert!(sigmoid(-20.0f64) < 1e-8);
        assert!(sigmoid(-20.0f64) > 0.0);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &x in &[-6.0f64, -1.0, 0.0, 0.3, 4.0] {
            assert!((logit(sigmoid(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_over_f32() {
        let g: f32 = sigmoid(f32::of(1.0));
        assert!((g - 0.731_058_6).abs() < 1e-6);
    }
}
