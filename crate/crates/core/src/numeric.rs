//! Small scalar helpers shared by the rate model and the Taylor terms.

use std::f64::consts::LN_2;

/// `log2(1 + x)` through `ln_1p` so small SNRs keep full precision.
#[inline]
pub(crate) fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// `ln(1 + r) - r / (1 + r)`, the tau-derivative kernel of `t ln(1 + s/t)`.
///
/// Both terms agree to first order, so below `r = 1e-3` the series
/// `r^2/2 - 2r^3/3 + 3r^4/4 - ...` is summed instead.
#[inline]
pub(crate) fn ln_1p_minus_ratio(r: f64) -> f64 {
    if r.abs() < 1e-3 {
        let mut sum = 0.0;
        let mut pow = r;
        for k in 2..10 {
            pow *= -r;
            // term k: (-1)^k (k-1)/k r^k
            sum += -(k as f64 - 1.0) / k as f64 * pow;
        }
        sum
    } else {
        r.ln_1p() - r / (1.0 + r)
    }
}

/// Rate of a perspective term in bits: `tau * w * log2(1 + s / tau)`.
///
/// `tau == 0` is the zero-time limit and yields 0 for any finite `s`.
#[inline]
pub(crate) fn perspective_bits(tau: f64, s: f64, w: f64) -> f64 {
    if tau == 0.0 {
        0.0
    } else {
        tau * w * log2_1p(s / tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_matches_direct_form() {
        for &r in &[1e-3f64, 2e-3, 0.5, 1.0, 10.0] {
            let direct = r.ln_1p() - r / (1.0 + r);
            assert!((ln_1p_minus_ratio(r) - direct).abs() < 1e-15, "r = {r}");
        }
        // near zero the direct form cancels, the series does not
        let r = 1e-9;
        assert!((ln_1p_minus_ratio(r) - (0.5 * r * r - 2.0 * r * r * r / 3.0)).abs() < 1e-33);
        let r = 9.9e-4f64;
        let direct = r.ln_1p() - r / (1.0 + r);
        assert!(((ln_1p_minus_ratio(r) - direct) / direct).abs() < 1e-10);
    }

    #[test]
    fn perspective_zero_time_limit() {
        assert_eq!(perspective_bits(0.0, 3.0, 1.0), 0.0);
        assert!((perspective_bits(1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }
}
