//! Sample statistics for the Monte Carlo harness.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn variance(x: &[f64]) -> f64 {
    covariance(x, x)
}

/// Unbiased sample covariance.
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need at least two samples");
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    covariance(x, y) / (variance(x) * variance(y)).sqrt()
}

/// Two-sided `level` band for `s^2 / sigma^2` with `n` Gaussian samples:
/// `[q_lo, q_hi] / (n-1)` from the chi-square law with `n-1` degrees of freedom.
pub fn chi_square_variance_band(n: usize, level: f64) -> (f64, f64) {
    let df = (n - 1) as f64;
    let chi = ChiSquared::new(df).expect("positive degrees of freedom");
    let tail = (1.0 - level) / 2.0;
    (chi.inverse_cdf(tail) / df, chi.inverse_cdf(1.0 - tail) / df)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q(lambda) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(mean(&x), 2.5);
        assert_relative_eq!(variance(&x), 5.0 / 3.0);
        assert_relative_eq!(correlation(&x, &[2.0, 4.0, 6.0, 8.0]), 1.0);
    }

    #[test]
    fn chi_square_band_values() {
        // normal approximation: 1 -+ 2.5758 sqrt(2/999), refined by skewness
        let (lo, hi) = chi_square_variance_band(1000, 0.99);
        assert!((lo - 0.888).abs() < 0.003, "{lo}");
        assert!((hi - 1.119).abs() < 0.003, "{hi}");
        let (lo, hi) = chi_square_variance_band(2, 0.99);
        assert!(lo < 1e-4 && hi > 7.8);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(f64::from).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_relative_eq!(p, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 250.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert_relative_eq!(d, 0.5, epsilon = 1e-12);
        assert!(p < 1e-10);
        // Q(1.36) is the classical 5% point
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
    }
}
