//! Small vector helpers shared across modules.

use crate::scalar::Scalar;

/// Numerically stable `log(sum(exp(v)))`. Returns `-inf` for an empty slice
/// and propagates `-inf` terms harmlessly.
pub fn log_sum_exp<S: Scalar>(v: &[S]) -> S {
    let m = v.iter().cloned().fold(S::neg_infinity(), S::max);
    if !m.is_finite() {
        return m;
    }
    let sum: S = v.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn squared_norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a)
}

pub fn squared_distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// `out = a + s * b`, elementwise.
pub fn add_scaled<S: Scalar>(a: &[S], s: S, b: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

pub fn mean<S: Scalar>(v: &[S]) -> S {
    if v.is_empty() {
        return S::nan();
    }
    v.iter().cloned().sum::<S>() / S::from_usize_exact(v.len())
}

/// Population variance (denominator `n`).
pub fn variance<S: Scalar>(v: &[S]) -> S {
    let m = mean(v);
    if v.is_empty() {
        return S::nan();
    }
    v.iter().map(|&x| (x - m) * (x - m)).sum::<S>() / S::from_usize_exact(v.len())
}

/// Percentile by linear interpolation on the sorted copy, `q` in `[0, 1]`.
pub fn percentile<S: Scalar>(v: &[S], q: S) -> S {
    assert!(!v.is_empty(), "percentile of empty slice");
    let mut sorted: Vec<S> = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN values"));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * S::from_usize_exact(n - 1);
    let lo = pos.floor().to_f64_lossy() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - S::from_usize_exact(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median<S: Scalar>(v: &[S]) -> S {
    percentile(v, S::lit(0.5))
}
