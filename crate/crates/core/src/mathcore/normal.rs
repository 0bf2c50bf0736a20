//! Standard normal distribution functions.
//!
//! `Φ` is evaluated through the complementary error function so that both
//! tails keep full relative precision; `Φ⁻¹` starts from the inverse
//! complementary error function and takes one Newton step on `Φ`.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Φ(x) = P(N(0,1) ≤ x)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile needs 0 < p < 1, got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // Newton on the tail that is computed without cancellation; the starting
    // value is only good to about 1e-10.
    for _ in 0..2 {
        let density = std_normal_pdf(x);
        if density <= 0.0 || !density.is_finite() {
            break;
        }
        let step = if x < 0.0 {
            (std_normal_cdf(x) - p) / density
        } else {
            ((1.0 - p) - std_normal_cdf(-x)) / density
        };
        x -= step;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on the density, 0 → x, with `2m` panels.
    fn simpson_cdf(x: f64, m: usize) -> f64 {
        let n = 2 * m;
        let h = x / n as f64;
        let mut s = std_normal_pdf(0.0) + std_normal_pdf(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * std_normal_pdf(i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
    }

    #[test]
    fn cdf_matches_integration_oracle() {
        // 1.959964 → 0.975 within 1e-6 (integration oracle).
        let oracle = simpson_cdf(1.959964, 20_000);
        assert!((oracle - 0.975).abs() < 1e-6);
        assert!((std_normal_cdf(1.959964) - oracle).abs() < 1e-12);
        for &x in &[-3.7, -1.2, 0.3, 0.9, 2.5, 4.1] {
            let o = simpson_cdf(x, 20_000);
            assert!((std_normal_cdf(x) - o).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn cdf_symmetry() {
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            let s = std_normal_cdf(x) + std_normal_cdf(-x);
            assert!((s - 1.0).abs() <= 1e-14, "x={x}: {s}");
        }
    }

    #[test]
    fn cdf_monotone() {
        let mut prev = 0.0;
        for i in -4000..=4000 {
            let v = std_normal_cdf(i as f64 * 0.002);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        // bisection oracle on the cdf
        let (mut lo, mut hi) = (0.0_f64, 5.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.959964).abs() < 1e-5);
        assert!((std_normal_quantile(0.975).unwrap() - lo).abs() < 1e-12);
        let q = std_normal_quantile(0.3).unwrap();
        assert!((std_normal_cdf(q) - 0.3).abs() < 1e-10);
    }

    #[test]
    fn quantile_roundtrip_grid() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let q = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(q) - p).abs() < 1e-10, "p={p}");
        }
        for &p in &[1e-12, 1e-8, 1.0 - 1e-8] {
            let q = std_normal_quantile(p).unwrap();
            assert!(((std_normal_cdf(q) - p) / p.min(1.0 - p)).abs() < 1e-6, "p={p}");
        }
    }

    #[test]
    fn quantile_domain_errors() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(Error::Domain(_))));
        }
    }
}
