//! Scalar constants and closed-form integrals of the Hermite-process model:
//! the Beta function, the normalizing constant c(H, q), the derived index H0,
//! the contraction constant a(H, q, r), and the power-law double time
//! integral, together with the Beta integral identity.
//!
//! All functions are pure and safe to call concurrently.

use crate::error::{HermiteError, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Parameters of a Hermite process of order `q` and self-similarity index `h`,
/// with the derived quantities used by kernel evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteParams {
    /// Chaos order, q >= 1.
    pub q: u32,
    /// Self-similarity index, 1/2 < H < 1.
    pub h: f64,
    /// Derived index H0 = 1 + (H-1)/q, in (1 - 1/(2q), 1).
    pub h0: f64,
    /// Exponent of each kernel factor, H0 - 3/2, in (-1/2 - 1/(2q), -1/2).
    pub kernel_exponent: f64,
    /// Normalizing constant c(H, q), chosen so that E[Z_1^2] = 1.
    pub c: f64,
}

/// Beta function via log-gamma, accurate to ~1e-12 relative.
pub fn beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(HermiteError::Domain(format!(
            "beta requires positive arguments, got ({a}, {b})"
        )));
    }
    Ok((ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp())
}

fn factorial(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// Builds the parameter set for order `q` and index `h`, computing
/// H0 = 1 + (H-1)/q and c(H,q) = sqrt( H(2H-1) / (q! beta(H0-1/2, 2-2H0)^q) ).
pub fn make_params(q: u32, h: f64) -> Result<HermiteParams> {
    if q < 1 {
        return Err(HermiteError::Domain(format!("order q must be >= 1, got {q}")));
    }
    if !(h > 0.5 && h < 1.0) {
        return Err(HermiteError::Domain(format!(
            "self-similarity index H must lie in (1/2, 1), got {h}"
        )));
    }
    let h0 = 1.0 + (h - 1.0) / q as f64;
    let b = beta(h0 - 0.5, 2.0 - 2.0 * h0)?;
    let c = (h * (2.0 * h - 1.0) / (factorial(q) * b.powi(q as i32))).sqrt();
    if !c.is_finite() || c <= 0.0 {
        return Err(HermiteError::Numeric(format!(
            "normalizing constant c({h}, {q}) evaluated to {c}"
        )));
    }
    Ok(HermiteParams { q, h, h0, kernel_exponent: h0 - 1.5, c })
}

/// The contraction constant a(H,q,r) = c(H,q)^2 beta((2-2H)/q, 1/2-(1-H)/q)^{r+1},
/// valid for 0 <= r <= q-1.
pub fn a_constant(params: &HermiteParams, r: u32) -> Result<f64> {
    if r > params.q - 1 {
        return Err(HermiteError::Domain(format!(
            "contraction index r={r} out of range 0..={}",
            params.q - 1
        )));
    }
    let qf = params.q as f64;
    let b = beta((2.0 - 2.0 * params.h) / qf, 0.5 - (1.0 - params.h) / qf)?;
    Ok(params.c * params.c * b.powi(r as i32 + 1))
}

/// Closed form of the full-line overlap integral of two shifted power
/// kernels: beta(-1-2a, a+1) |u-v|^{2a+1}, valid for -1 < a < -1/2.
///
/// Equals the integral over y of (u-y)_+^a (v-y)_+^a. At u == v the integral
/// diverges; infinity is returned as the limit signal.
pub fn beta_identity_rhs(u: f64, v: f64, a: f64) -> Result<f64> {
    if !(a > -1.0 && a < -0.5) {
        return Err(HermiteError::Domain(format!(
            "beta identity exponent must lie in (-1, -1/2), got {a}"
        )));
    }
    if u == v {
        return Ok(f64::INFINITY);
    }
    Ok(beta(-1.0 - 2.0 * a, a + 1.0)? * (u - v).abs().powf(2.0 * a + 1.0))
}

/// Double time integral of |u-v|^lambda over [0,s] x [0,t], lambda in (-1, 0],
/// via the closed form (s^{l+2} + t^{l+2} - |t-s|^{l+2}) / ((l+1)(l+2)).
pub fn power_law_double_integral(s: f64, t: f64, lambda: f64) -> Result<f64> {
    if !(s > 0.0 && t > 0.0) {
        return Err(HermiteError::Domain(format!(
            "time bounds must be positive, got ({s}, {t})"
        )));
    }
    if !(lambda > -1.0 && lambda <= 0.0) {
        return Err(HermiteError::Domain(format!(
            "exponent must lie in (-1, 0] (divergent otherwise), got {lambda}"
        )));
    }
    let p = lambda + 2.0;
    Ok((s.powf(p) + t.powf(p) - (t - s).abs().powf(p)) / ((lambda + 1.0) * p))
}
