//! Deterministic summation and adaptive quadrature primitives.

use crate::error::{HermiteError, Result};
use std::sync::OnceLock;

/// Pairwise (tree) summation in a fixed order.
///
/// Used wherever a sum must be independent of chunking or thread count and
/// more accurate than naive left-to-right accumulation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Dot product with pairwise accumulation.
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= 32 {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// FNV-1a 64-bit hash; used for cache file names and config fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed once per order by
/// Newton iteration on the Legendre recurrence.
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    fn compute(n: usize) -> GaussRule {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev initial guess for the i-th root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Evaluate P_n(x) and P_n'(x) via the three-term recurrence.
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussRule { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        half * acc
    }
}

fn rule_low() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::compute(10))
}

fn rule_high() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::compute(21))
}

/// Adaptive quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    /// Relative tolerance on the whole integral.
    pub tol: f64,
    /// Maximum bisection depth per panel.
    pub max_depth: u32,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings { tol: 1e-10, max_depth: 48 }
    }
}

/// Adaptive Gauss quadrature with nested 10/21-point error estimation and
/// recursive bisection. Integrable endpoint singularities are handled by the
/// depth-driven concentration of panels; callers with known singular factors
/// should absorb them by substitution first.
pub fn adaptive_quad<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, settings: QuadSettings) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let coarse = rule_high().integrate(a, b, f).abs();
    let scale = coarse.max(1e-300);
    let mut err_acc = 0.0;
    let value = adapt(f, a, b, settings.tol * scale, settings.max_depth, &mut err_acc);
    if err_acc > 10.0 * settings.tol * scale.max(value.abs()) {
        return Err(HermiteError::Numeric(format!(
            "adaptive quadrature did not converge on [{a}, {b}]: residual error estimate {err_acc:.3e} at tol {} within depth {}",
            settings.tol, settings.max_depth
        )));
    }
    Ok(value)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol_abs: f64, depth: u32, err_acc: &mut f64) -> f64 {
    let low = rule_low().integrate(a, b, f);
    let high = rule_high().integrate(a, b, f);
    let err = (high - low).abs();
    // the second branch is the rounding floor: once the estimate is at
    // machine precision, halved tolerances can no longer be met and would
    // force a full tree to max_depth
    if err <= tol_abs
        || err <= 1e-14 * high.abs()
        || (b - a).abs() < 1e-15 * (a.abs() + b.abs() + 1.0)
    {
        return high;
    }
    if depth == 0 {
        *err_acc += err;
        return high;
    }
    let mid = 0.5 * (a + b);
    adapt(f, a, mid, 0.5 * tol_abs, depth - 1, err_acc) + adapt(f, mid, b, 0.5 * tol_abs, depth - 1, err_acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_on_polynomials() {
        let r = rule_low();
        // degree 19 polynomial integrated exactly by 10-point Gauss
        let val = r.integrate(0.0, 1.0, |x| x.powi(19));
        assert!((val - 0.05).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_with_unbounded_derivative() {
        // int_0^1 x^0.35 dx = 1/1.35
        let v = adaptive_quad(&|x: f64| x.powf(0.35), 0.0, 1.0, QuadSettings::default()).unwrap();
        assert!((v - 1.0 / 1.35).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn adaptive_reports_divergence() {
        // a non-integrable singularity must not be silently accepted
        let r = adaptive_quad(&|x: f64| 1.0 / x, 0.0, 1.0, QuadSettings::default());
        assert!(r.is_err());
    }

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
