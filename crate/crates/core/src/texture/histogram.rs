use crate::scalar::Scalar;

/// Mean, Variance, Skewness, Kurtosis, Min, Max of raw values.
///
/// Population moments; skewness `m3 / s^3` and (non-excess) kurtosis
/// `m4 / s^4` are 0 when the variance is 0.
pub fn histogram_features<T: Scalar>(values: &[T]) -> [T; 6] {
    assert!(!values.is_empty(), "histogram of an empty window");
    let n = T::of(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    let (mut m2, mut m3, mut m4) = (T::zero(), T::zero(), T::zero());
    let (mut lo, mut hi) = (values[0], values[0]);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 = m2 + d2;
        m3 = m3 + d2 * d;
        m4 = m4 + d2 * d2;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skew, kurt) = if m2 > T::zero() {
        (m3 / (m2 * m2.sqrt()), m4 / (m2 * m2))
    } else {
        (T::zero(), T::zero())
    };
    [mean, m2, skew, kurt, lo, hi]
}
