//! Small floating-point utilities shared across the crate.
//!
//! The quadrature oracle sums hundreds of thousands of terms spanning many
//! orders of magnitude, and several acceptance checks care about absolute
//! errors near 1e-9, so plain `+=` accumulation is not good enough. This
//! module provides compensated (Kahan–Neumaier) summation, a numerically
//! stable `log(sum(exp(...)))`, and a compensated trapezoid rule.

use crate::diff::Real;

/// Natural log of `2 * pi`, used by Gaussian log-densities.
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Compensated accumulator (Neumaier's variant of Kahan summation).
///
/// Tracks a running correction term so that the final [`KahanSum::value`]
/// is accurate to within a few ulps of the true sum regardless of term
/// ordering or cancellation between terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    /// A fresh accumulator holding zero.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one term.
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// The compensated total.
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sums a slice with compensation.
pub fn kahan_sum(xs: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// `log(sum_i exp(xs[i]))`, computed stably by factoring out the maximum.
///
/// Returns negative infinity for an empty slice or when every entry is
/// negative infinity (an all-zero sum of exponentials). Any NaN in the
/// input propagates to the result.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x.is_nan() {
            return f64::NAN;
        }
        if x > m {
            m = x;
        }
    }
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(libm::exp(x - m));
    }
    m + libm::log(acc.value())
}

/// Trapezoid rule on uniformly spaced samples with spacing `h`.
///
/// For integrands that decay smoothly to (near) zero at both endpoints —
/// the Gaussian-tailed integrands this crate feeds it — the trapezoid rule
/// converges spectrally fast, so it doubles as a high-accuracy quadrature.
pub fn trapezoid_uniform(ys: &[f64], h: f64) -> f64 {
    if ys.len() < 2 {
        return 0.0;
    }
    let mut acc = KahanSum::new();
    for &y in &ys[1..ys.len() - 1] {
        acc.add(y);
    }
    acc.add(0.5 * (ys[0] + ys[ys.len() - 1]));
    h * acc.value()
}

/// Log-density of `N(mean, variance)` at `y`, generic over scalar type.
pub fn gaussian_log_density<R: Real>(y: R, mean: R, variance: R) -> R {
    let half = R::from_f64(0.5);
    let resid = y - mean;
    -(half * resid * resid) / variance - half * variance.ln() - R::from_f64(0.5 * LN_2PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_2pi_matches_std() {
        assert_relative_eq!(LN_2PI, (2.0 * core::f64::consts::PI).ln(), epsilon = 1e-15);
    }

    #[test]
    fn kahan_recovers_cancellation() {
        // 1 + 1e16 - 1e16 loses the 1 in naive order-sensitive summation.
        let xs = [1.0, 1e16, -1e16];
        assert_eq!(kahan_sum(&xs), 1.0);
    }

    #[test]
    fn kahan_many_small_terms() {
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| 0.1).collect();
        assert_relative_eq!(kahan_sum(&xs), 0.1 * n as f64, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_two_equal_terms() {
        assert_relative_eq!(log_sum_exp(&[0.0, 0.0]), core::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_large_offsets() {
        // Factoring out the max must avoid overflow: both entries huge.
        assert_relative_eq!(
            log_sum_exp(&[1000.0, 1000.0]),
            1000.0 + core::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_sum_exp_empty_and_all_neg_inf() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 4]), f64::NEG_INFINITY);
    }

    #[test]
    fn trapezoid_integrates_gaussian_to_one() {
        // Unit Gaussian over [-9, 9]: tails below 1e-18, so the rule should
        // hit the normalization constant to near machine precision.
        let n = 2001;
        let (lo, hi) = (-9.0, 9.0);
        let h = (hi - lo) / (n - 1) as f64;
        let ys: Vec<f64> = (0..n)
            .map(|i| {
                let y = lo + h * i as f64;
                libm::exp(-0.5 * y * y) / libm::sqrt(2.0 * core::f64::consts::PI)
            })
            .collect();
        assert_relative_eq!(trapezoid_uniform(&ys, h), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_log_density_unit_at_mean() {
        // N(0,1) at 0 is -0.5*ln(2*pi).
        assert_relative_eq!(gaussian_log_density(0.0, 0.0, 1.0), -0.918_938_533_204_672_7, epsilon = 1e-15);
    }
}
