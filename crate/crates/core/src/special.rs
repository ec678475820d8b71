//! Scalar special functions used across the targets and samplers.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// `0.5 * ln(2 pi)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub use statrs::function::gamma::ln_gamma;

/// Beyond this |z| the normal tail is evaluated through the Mills ratio.
const TAIL_SWITCH: f64 = 6.0;

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let max = a.max(b);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + ((a - max).exp() + (b - max).exp()).ln()
}

pub fn std_normal_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal quantile function.
pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Mills ratio `(1 - Phi(x)) / phi(x)` for large positive `x`, by Lentz's
/// continued fraction `1 / (x + 1 / (x + 2 / (x + 3 / ...)))`.
fn mills_ratio(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `ln Phi(z)`, finite for every finite `z`.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < -TAIL_SWITCH {
        if z == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let x = -z;
        std_normal_log_pdf(x) + mills_ratio(x).ln()
    } else if z > TAIL_SWITCH {
        let upper = if z.is_infinite() {
            0.0
        } else {
            (std_normal_log_pdf(z) + mills_ratio(z).ln()).exp()
        };
        (-upper).ln_1p()
    } else {
        (0.5 * erfc(-z * FRAC_1_SQRT_2)).ln()
    }
}

/// `ln(1 - Phi(z)) = ln Phi(-z)`.
pub fn log_std_normal_sf(z: f64) -> f64 {
    log_std_normal_cdf(-z)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn ln_2pi() -> f64 {
    (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cdf_matches_direct_in_body() {
        for &z in &[-5.9, -3.0, -0.5, 0.0, 0.7, 2.5, 5.9] {
            let direct = std_normal_cdf(z).ln();
            assert!((log_std_normal_cdf(z) - direct).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn log_cdf_tail_is_continuous_at_switch() {
        let below = log_std_normal_cdf(-6.0 - 1e-9);
        let above = log_std_normal_cdf(-6.0 + 1e-9);
        assert!((below - above).abs() < 1e-7);
        let below = log_std_normal_cdf(6.0 - 1e-9);
        let above = log_std_normal_cdf(6.0 + 1e-9);
        assert!((below - above).abs() < 1e-15);
    }

    #[test]
    fn log_cdf_deep_tail() {
        // ln Phi(-40) from the asymptotic series -x^2/2 - ln x - ln sqrt(2 pi) + ln(1 - 1/x^2 + 3/x^4)
        let x: f64 = 40.0;
        let series = -0.5 * x * x - x.ln() - LN_SQRT_2PI + (1.0 - 1.0 / (x * x) + 3.0 / x.powi(4)).ln();
        assert!((log_std_normal_cdf(-x) - series).abs() < 1e-8);
        assert!(log_std_normal_cdf(-1e3).is_finite());
        assert_eq!(log_std_normal_cdf(50.0), -0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 0.999] {
            assert!((std_normal_cdf(std_normal_quantile(p)) - p).abs() < 1e-12 * p.max(1e-3) * 1e3);
        }
    }

    #[test]
    fn lse_handles_infinities() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_logit_roundtrip() {
        for &x in &[-20.0, -1.0, 0.0, 3.0, 15.0] {
            assert!((logit(logistic(x)) - x).abs() < 1e-6);
        }
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }
}
