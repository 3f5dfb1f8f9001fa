//! Floating-point abstraction shared by the numeric modules.
//!
//! Stored embeddings are always `f32` (that is the on-disk format), but every
//! routine that does arithmetic on them is written against [`Scalar`] so the
//! same code runs in `f32` for production and `f64` for gradient checking.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Floating point: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless widening for accumulation.
    fn to_f64_lossless(self) -> f64;

    /// Narrowing conversion (rounds to nearest for `f32`).
    fn from_f64_rounded(v: f64) -> Self;

    /// Literal helper, `Self::lit(0.5)`.
    fn lit(v: f64) -> Self {
        Self::from_f64_rounded(v)
    }
}

impl Scalar for f32 {
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64_rounded(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64_rounded(v: f64) -> Self {
        v
    }
}

/// Dot product accumulated in `f64`.
pub fn dot_f64<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.to_f64_lossless() * y.to_f64_lossless())
        .sum()
}

/// Euclidean norm accumulated in `f64`.
pub fn l2_norm_f64<T: Scalar>(v: &[T]) -> f64 {
    dot_f64(v, v).sqrt()
}

/// Euclidean distance accumulated in `f64`.
pub fn l2_distance_f64<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.to_f64_lossless() - y.to_f64_lossless();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Convert a slice between scalar types.
pub fn cast_vec<A: Scalar, B: Scalar>(v: &[A]) -> Vec<B> {
    v.iter().map(|x| B::from_f64_rounded(x.to_f64_lossless())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widening_is_exact() {
        let x = 0.1f32;
        assert_eq!(f32::from_f64_rounded(x.to_f64_lossless()), x);
    }

    #[test]
    fn distance_of_three_four_five() {
        assert_eq!(l2_distance_f64(&[3.0f32, 4.0], &[0.0f64, 0.0]), 5.0);
        assert_eq!(l2_norm_f64(&[1.0f64, 2.0, 2.0]), 3.0);
    }
}
