//! Standard normal helpers built on a correctly rounded `erfc`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal mass of `[a, b]`, evaluated on whichever tail keeps
/// both terms small so that far-tail intervals keep full relative accuracy.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    }
}

/// Mass of `N(mean, sd²)` on `[a, b]`.
pub fn gaussian_interval(mean: f64, sd: f64, a: f64, b: f64) -> f64 {
    norm_interval((a - mean) / sd, (b - mean) / sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_symmetry_and_known_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        for &x in &[-3.0, -0.7, 0.2, 5.0] {
            assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() < 1e-15);
            assert!((norm_sf(x) - norm_cdf(-x)).abs() < 1e-16);
        }
    }

    #[test]
    fn far_tail_interval_keeps_relative_accuracy() {
        // Φc(30) ≈ 4.906713927148187e-198
        let m = norm_interval(30.0, f64::INFINITY);
        assert!((m / 4.906713927148187e-198 - 1.0).abs() < 1e-12);
        let total = norm_interval(-40.0, 40.0);
        assert!((total - 1.0).abs() < 1e-15);
    }
}
