//! Summary statistics and goodness-of-fit tests used by the Monte Carlo
//! harness.

use crate::error::{invalid, Result};
use crate::scalar::accurate_sum;
use crate::special::{kolmogorov_sf, normal_cdf};

pub fn mean(xs: &[f64]) -> f64 {
    accurate_sum(xs.iter().copied()) / xs.len() as f64
}

/// Population variance (divisor `n`).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    accurate_sum(xs.iter().map(|&x| (x - m) * (x - m))) / xs.len() as f64
}

/// Lower-middle order statistic for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against `N(0, 1)`, with the
/// Stephens small-sample correction of the asymptotic p-value.
pub fn ks_standard_normal(sample: &[f64]) -> Result<KsResult> {
    if sample.is_empty() {
        return invalid("KS test needs a nonempty sample");
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return invalid("KS sample contains non-finite values");
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let rn = n.sqrt();
    let p = kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d);
    Ok(KsResult { statistic: d, p_value: p })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// NaN with fewer than three points.
    pub slope_se: f64,
}

/// Ordinary least squares `y ≈ a + b·x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("OLS needs two equally long series of at least 2 points");
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx = accurate_sum(x.iter().map(|&a| (a - mx) * (a - mx)));
    if !(sxx > 0.0) {
        return invalid("OLS regressor has no spread");
    }
    let sxy = accurate_sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let n = x.len();
    let slope_se = if n > 2 {
        let rss = accurate_sum(x.iter().zip(y).map(|(&a, &b)| {
            let r = b - intercept - slope * a;
            r * r
        }));
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LinearFit { slope, intercept, slope_se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn moments_and_median() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert_eq!(variance(&xs), 1.25);
        assert_eq!(median(&xs), 2.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn ks_single_point() {
        let r = ks_standard_normal(&[0.0]).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
        assert!(ks_standard_normal(&[]).is_err());
        assert!(ks_standard_normal(&[f64::NAN]).is_err());
    }

    #[test]
    fn ks_detects_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..2000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + 0.3
            })
            .collect();
        assert!(ks_standard_normal(&xs).unwrap().p_value < 1e-6);
    }

    #[test]
    fn ks_sanity_on_normal_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_901);
        let mut passes = 0;
        for _ in 0..100 {
            let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
            if ks_standard_normal(&xs).unwrap().p_value > 0.001 {
                passes += 1;
            }
        }
        assert!(passes >= 99, "{passes}/100");
    }

    #[test]
    fn ks_p_values_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ps: Vec<f64> = (0..400)
            .map(|_| {
                let xs: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
                ks_standard_normal(&xs).unwrap().p_value
            })
            .collect();
        let below = ps.iter().filter(|&&p| p < 0.1).count() as f64 / 400.0;
        assert!((below - 0.1).abs() < 0.05, "{below}");
    }

    #[test]
    fn ols_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = ols(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_se.abs() < 1e-7);
        assert!(ols(&x[..2], &y[..2]).unwrap().slope_se.is_nan());
        assert!(ols(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ols_slope_se_matches_textbook() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 2.0];
        let f = ols(&x, &y).unwrap();
        // residuals −0.5, 1, −0.5; rss = 1.5; sxx = 2
        assert!((f.slope - 0.5).abs() < 1e-15);
        assert!((f.slope_se - (1.5f64 / 2.0).sqrt()).abs() < 1e-15);
    }
}
