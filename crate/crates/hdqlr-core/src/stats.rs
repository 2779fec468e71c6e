//! Scalar statistics helpers: moments, the standard normal distribution, and
//! the ceiling-order-statistic empirical quantile used for critical values.

use alloc::vec::Vec;

#[inline]
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for &x in xs {
        s += x;
    }
    s / xs.len() as f64
}

/// Biased (divide-by-n) variance, matching the moment kernel convention.
pub fn variance_n(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let mut s = 0.0;
    for &x in xs {
        let d = x - m;
        s += d * d;
    }
    if xs.is_empty() {
        0.0
    } else {
        s / xs.len() as f64
    }
}

/// Unbiased sample standard deviation.
pub fn sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    libm::sqrt(variance_n(xs) * n as f64 / (n as f64 - 1.0))
}

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI)
}

/// Standard normal quantile for `p` in (0, 1).
///
/// Bracketed Newton on [`normal_cdf`]; the CDF is monotone and smooth, so the
/// iteration converges to full double precision from a crude start. Returns
/// `NAN` outside (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    // Symmetry keeps the bracket on one side.
    if p > 0.5 {
        return -normal_quantile(1.0 - p);
    }
    let (mut lo, mut hi) = (-40.0_f64, 0.0_f64);
    // Crude start from the tail bound, then safeguarded Newton.
    let mut x = -libm::sqrt(-2.0 * libm::log(p));
    if !x.is_finite() {
        x = -1.0;
    }
    for _ in 0..200 {
        let f = normal_cdf(x) - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = normal_pdf(x);
        let mut next = x - f / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if libm::fabs(next - x) < 1e-15 * (1.0 + libm::fabs(x)) {
            return next;
        }
        x = next;
    }
    x
}

/// Empirical `level` quantile with the ceiling order-statistic convention:
/// the `ceil(level * m)`-th smallest value (1-based), clamped to `[1, m]`.
pub fn quantile_ceil(values: &mut Vec<f64>, level: f64) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let m = values.len();
    let idx = libm::ceil(level * m as f64) as usize;
    let idx = idx.clamp(1, m);
    values[idx - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_published_digits() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.95) - 1.6448536269514722).abs() < 1e-12);
        assert!((normal_quantile(0.995) - 2.5758293035489004).abs() < 1e-12);
        assert!(normal_quantile(0.5).abs() < 1e-15);
    }

    #[test]
    fn quantile_roundtrips_through_cdf() {
        for &p in &[1e-6, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0 - 1e-6] {
            let q = normal_quantile(p);
            assert!((normal_cdf(q) - p).abs() < 1e-13, "p={p}");
        }
        assert!(normal_quantile(0.0).is_nan());
        assert!(normal_quantile(1.0).is_nan());
    }

    #[test]
    fn ceiling_quantile_convention() {
        // 10 values 1..=10: level 0.95 -> ceil(9.5) = 10th smallest.
        let mut v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(quantile_ceil(&mut v, 0.95), 10.0);
        let mut v: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        assert_eq!(quantile_ceil(&mut v, 0.95), 19.0);
        // exact multiple: ceil(0.5 * 10) = 5th smallest
        let mut v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(quantile_ceil(&mut v, 0.5), 5.0);
    }

    #[test]
    fn moments_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance_n(&xs) - 1.25).abs() < 1e-15);
        assert!((sd(&xs) - libm::sqrt(5.0 / 3.0)).abs() < 1e-15);
    }
}
