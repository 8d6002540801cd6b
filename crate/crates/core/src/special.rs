//! Scaled error functions and Gaussian tail helpers used by the denoisers and
//! output channels.

use std::f64::consts::{FRAC_2_SQRT_PI, LN_2, PI, SQRT_2};

const INV_SQRT_PI: f64 = 0.5 * FRAC_2_SQRT_PI;

/// Above this argument `erfc(x) * exp(x^2)` loses range and the asymptotic
/// expansion is used instead.
const ERFCX_ASYMPTOTIC: f64 = 26.0;

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        // erfcx(x) = 2 exp(x^2) - erfcx(-x)
        let e = exp_square(x);
        return if e.is_infinite() { f64::INFINITY } else { 2.0 * e - erfcx(-x) };
    }
    if x < ERFCX_ASYMPTOTIC {
        return libm::erfc(x) * exp_square(x);
    }
    // 1/(x sqrt(pi)) * sum_n (-1)^n (2n-1)!! / (2x^2)^n
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..10 {
        term *= -((2 * n - 1) as f64) * inv;
        sum += term;
    }
    INV_SQRT_PI * sum / x
}

/// `exp(x^2)` with the rounding error of the square folded back in.
fn exp_square(x: f64) -> f64 {
    let x2 = x * x;
    let lo = x.mul_add(x, -x2);
    libm::exp(x2) * (1.0 + lo)
}

/// Standard normal density.
pub fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u / SQRT_2)
}

/// `log Phi(u)`, accurate in both tails.
pub fn log_normal_cdf(u: f64) -> f64 {
    if u < 0.0 {
        (0.5 * erfcx(-u / SQRT_2)).ln() - 0.5 * u * u
    } else {
        (-0.5 * libm::erfc(u / SQRT_2)).ln_1p()
    }
}

/// Inverse Mills ratio `phi(u) / Phi(u)`.
pub fn mills_ratio(u: f64) -> f64 {
    (2.0 / PI).sqrt() / erfcx(-u / SQRT_2)
}

/// Returns `(h, m, v)` with `h = phi(u)/Phi(u)`, `m = u + h` and
/// `v = 1 - h (u + h)`: the mean and variance of `N(u, 1)` conditioned on
/// being positive. Uses a continued fraction in the far negative tail where
/// the direct forms cancel.
pub fn truncated_normal_moments(u: f64) -> (f64, f64, f64) {
    const CF_SWITCH: f64 = -5.0;
    if u >= CF_SWITCH {
        let h = mills_ratio(u);
        let m = u + h;
        return (h, m, 1.0 - h * m);
    }
    // Continued fraction Q(t)/phi(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...)))).
    // With L = 2/(t + 3/(t + ...)) and K = 1/(t + L): m = K and
    // v = (L - K)/(t + L), both free of cancellation.
    let t = -u;
    let mut tail = 0.0;
    for n in (2..=120).rev() {
        tail = n as f64 / (t + tail);
    }
    let l = tail;
    let k = 1.0 / (t + l);
    (t + k, k, (l - k) / (t + l))
}

/// `log cosh(b)` without overflow.
pub fn log_cosh(b: f64) -> f64 {
    let a = b.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Logistic function `1 / (1 + exp(-t))`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn erfcx_matches_reference_values() {
        // Reference values from mpmath at 30 digits.
        assert_relative_eq!(erfcx(0.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(erfcx(1.0), 0.427_583_576_155_807_0, max_relative = 1e-14);
        assert_relative_eq!(erfcx(10.0), 0.056_140_992_743_822_59, max_relative = 1e-13);
        assert_relative_eq!(erfcx(30.0), 0.018_795_888_861_416_75, max_relative = 1e-13);
        assert_relative_eq!(erfcx(-1.0), 5.008_980_080_762_283, max_relative = 1e-14);
    }

    #[test]
    fn erfcx_is_continuous_across_branch() {
        let below = erfcx(ERFCX_ASYMPTOTIC - 1e-12);
        let above = erfcx(ERFCX_ASYMPTOTIC + 1e-12);
        assert_relative_eq!(below, above, max_relative = 1e-12);
    }

    #[test]
    fn log_normal_cdf_tails() {
        assert_relative_eq!(log_normal_cdf(0.0), -LN_2, max_relative = 1e-15);
        // log Phi(-30) = -454.3212439563...
        assert_relative_eq!(log_normal_cdf(-30.0), -454.321_243_956_343_2, max_relative = 1e-12);
        assert!(log_normal_cdf(40.0) <= 0.0);
        assert!(log_normal_cdf(-1e3).is_finite());
    }

    #[test]
    fn truncated_moments_continuous_at_switch() {
        let (h1, m1, v1) = truncated_normal_moments(-5.0 + 1e-9);
        let (h2, m2, v2) = truncated_normal_moments(-5.0 - 1e-9);
        assert_relative_eq!(h1, h2, max_relative = 1e-8);
        assert_relative_eq!(m1, m2, max_relative = 1e-7);
        assert_relative_eq!(v1, v2, max_relative = 1e-6);
        // Large negative argument: mean ~ 1/t, variance ~ 1/t^2.
        let (_, m, v) = truncated_normal_moments(-1e4);
        assert_relative_eq!(m, 1e-4, max_relative = 1e-7);
        assert_relative_eq!(v, 1e-8, max_relative = 1e-6);
    }

    #[test]
    fn mills_ratio_asymptotes() {
        // phi(u)/Phi(u) ~ -u for u -> -inf
        let u = -50.0;
        assert_relative_eq!(mills_ratio(u), -u, max_relative = 1e-3);
        assert!(mills_ratio(40.0) >= 0.0 && mills_ratio(40.0) < 1e-300);
        assert_relative_eq!(
            mills_ratio(0.3),
            normal_pdf(0.3) / normal_cdf(0.3),
            max_relative = 1e-14
        );
    }
}
