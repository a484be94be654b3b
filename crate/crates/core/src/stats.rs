//! Empirical distributions, two-sample Kolmogorov-Smirnov tests, and the
//! DKW band used by the stochastic-dominance check.

use crate::error::{HermiteError, Result};
use serde::Serialize;

/// Sorted sample with right-continuous step CDF.
#[derive(Debug, Clone)]
pub struct EmpiricalDistribution {
    pub samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<EmpiricalDistribution> {
        if samples.is_empty() {
            return Err(HermiteError::Domain("empty sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(HermiteError::Domain("sample contains NaN".into()));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalDistribution { samples })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// F(x) = fraction of samples <= x.
    pub fn cdf(&self, x: f64) -> f64 {
        self.samples.partition_point(|&s| s <= x) as f64 / self.samples.len() as f64
    }
}

/// Two-sample KS statistic sup |F_X - F_Y|.
pub fn ks_statistic(x: &EmpiricalDistribution, y: &EmpiricalDistribution) -> f64 {
    let (xs, ys) = (&x.samples, &y.samples);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level alpha:
/// c(alpha) sqrt((n+m)/(nm)), c(alpha) = sqrt(-ln(alpha/2)/2).
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Result of one two-sample KS comparison.
#[derive(Debug, Clone, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub pass: bool,
}

pub fn ks_two_sample(
    x: &EmpiricalDistribution,
    y: &EmpiricalDistribution,
    alpha: f64,
) -> KsOutcome {
    let statistic = ks_statistic(x, y);
    let threshold = ks_critical_value(x.n(), y.n(), alpha);
    KsOutcome { statistic, threshold, n_x: x.n(), n_y: y.n(), pass: statistic <= threshold }
}

/// Two-sided DKW half-width sqrt(ln(2/alpha)/(2n)).
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Standard normal CDF by the complementary error function (Abramowitz &
/// Stegun 7.1.26 rational approximation, |error| < 1.5e-7); enough for KS
/// reference comparisons at desk sample sizes.
pub fn standard_normal_cdf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs() / std::f64::consts::SQRT_2);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x / 2.0).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

/// One-sample KS distance of a sample to the standard normal law.
pub fn ks_to_standard_normal(x: &EmpiricalDistribution) -> f64 {
    let n = x.samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &s) in x.samples.iter().enumerate() {
        let f = standard_normal_cdf(s);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_step_function() {
        let e = EmpiricalDistribution::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.samples, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.cdf(0.5), 0.0);
        assert_eq!(e.cdf(1.0), 1.0 / 3.0);
        assert_eq!(e.cdf(2.5), 2.0 / 3.0);
        assert_eq!(e.cdf(10.0), 1.0);
        assert!(EmpiricalDistribution::new(vec![]).is_err());
        assert!(EmpiricalDistribution::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn ks_statistic_known_cases() {
        let x = EmpiricalDistribution::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ks_statistic(&x, &x), 0.0);
        let y = EmpiricalDistribution::new(vec![10.0, 11.0, 12.0]).unwrap();
        assert_eq!(ks_statistic(&x, &y), 1.0);
        let z = EmpiricalDistribution::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // F_x jumps to 1 at 3, F_z = 3/4 there
        assert!((ks_statistic(&x, &z) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ks_test_accepts_same_law_rejects_shifted() {
        // deterministic uniform-ish sequences via golden-ratio rotation
        let phi = 0.6180339887498949f64;
        let a: Vec<f64> = (0..2000).map(|i| (i as f64 * phi).fract()).collect();
        let b: Vec<f64> = (0..2000).map(|i| ((i as f64 + 0.5) * phi).fract()).collect();
        let ea = EmpiricalDistribution::new(a.clone()).unwrap();
        let eb = EmpiricalDistribution::new(b).unwrap();
        assert!(ks_two_sample(&ea, &eb, 0.01).pass);
        let shifted: Vec<f64> = a.iter().map(|v| v + 0.2).collect();
        let es = EmpiricalDistribution::new(shifted).unwrap();
        assert!(!ks_two_sample(&ea, &es, 0.01).pass);
    }

    #[test]
    fn dkw_and_critical_values() {
        assert!((dkw_epsilon(10000, 0.01) - (f64::ln(200.0) / 20000.0).sqrt()).abs() < 1e-15);
        let t = ks_critical_value(100, 100, 0.05);
        // c(0.05) = 1.3581; threshold = c * sqrt(2/100)
        assert!((t - 1.3581015157406195 * (0.02f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((standard_normal_cdf(1.96) - 0.9750021).abs() < 1e-5);
        assert!((standard_normal_cdf(-1.0) - 0.15865525).abs() < 1e-5);
    }

    #[test]
    fn gaussian_increments_pass_normality() {
        // pooled normalized increments vs the standard normal law
        let grid = std::sync::Arc::new(crate::grid::build_grid(1.0, 1.0, 100).unwrap());
        let mut pooled = Vec::with_capacity(100_000);
        for s in 0..1000u64 {
            let w = crate::grid::sample_increments(&grid, 31, s);
            pooled.extend(w.increments.iter().map(|x| x / grid.delta.sqrt()));
        }
        let e = EmpiricalDistribution::new(pooled).unwrap();
        let d = ks_to_standard_normal(&e);
        // asymptotic one-sample critical value at alpha = 0.01
        let crit = 1.62762 / (e.n() as f64).sqrt();
        assert!(d < crit, "KS distance {d} vs {crit}");
    }
}
