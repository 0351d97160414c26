//! Fixed-order pairwise summation.
//!
//! Every reduction in the crate goes through these helpers so that the
//! association order depends only on the length of the input, never on how
//! work is split across threads.

use crate::scalar::Scalar;

const LEAF: usize = 8;

/// Pairwise sum of `xs`.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    pairwise_sum_by(xs.len(), |i| xs[i])
}

/// Pairwise sum of `f(0) + ... + f(n - 1)`.
pub fn pairwise_sum_by<T: Scalar>(n: usize, f: impl Fn(usize) -> T) -> T {
    fn rec<T: Scalar>(lo: usize, hi: usize, f: &impl Fn(usize) -> T) -> T {
        if hi - lo <= LEAF {
            let mut acc = T::zero();
            for i in lo..hi {
                acc = acc + f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), |i| a[i] * b[i])
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    pairwise_sum(xs) / T::of(xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_sum_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }

    #[test]
    fn pairwise_is_more_accurate_than_sequential() {
        let xs = vec![0.1f32; 1 << 20];
        let exact = 0.1f64 * (1u64 << 20) as f64;
        let seq: f32 = xs.iter().sum();
        let pw = pairwise_sum(&xs);
        assert!((pw as f64 - exact).abs() < (seq as f64 - exact).abs());
    }
}
