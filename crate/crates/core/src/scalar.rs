//! Floating point abstraction shared by the similarity, prediction and
//! evaluation code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used for every similarity, prediction and metric value.
///
/// Ratings themselves are stored as small integers; all arithmetic on them
/// happens in a `Scalar`. Implemented for `f32` and `f64`; `f64` is what the
/// crate-root aliases and the CLI use.
pub trait Scalar:
    'static
    + Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
{
    #[inline]
    fn from_rating(r: u8) -> Self {
        Self::from_u8(r).unwrap()
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).unwrap()
    }

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic function `1 / (1 + exp(-x))`, evaluated without approximation.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Arithmetic mean of a non-empty slice of ratings.
pub(crate) fn mean_of<T: Scalar>(ratings: impl Iterator<Item = u8>) -> Option<T> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for r in ratings {
        sum += T::from_rating(r);
        n += 1;
    }
    (n > 0).then(|| sum / T::from_count(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_symmetry() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        let x = 1.7f64;
        assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        assert_eq!(sigmoid(0.0f32), 0.5);
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean_of::<f64>(std::iter::empty()), None);
        assert_eq!(mean_of::<f64>([2u8, 4].into_iter()), Some(3.0));
    }
}
