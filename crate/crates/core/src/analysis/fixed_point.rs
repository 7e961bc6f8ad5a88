//! Fixed points of the scalar precision update
//! `g(gamma) = (2 eps + 1)(beta + gamma)^2 / (beta^2 y^2 + beta + gamma)`,
//! which is what SBL reduces to per coordinate when `A` is the identity.
//!
//! With `u = beta y^2` the fixed points solve
//! `2 eps gamma^2 - beta (u - 4 eps - 1) gamma + (2 eps + 1) beta^2 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for deciding that `u` sits on the neutral threshold.
pub const NEUTRAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StableFp,
    Diverge,
    Neutral,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::StableFp => "stable_fp",
            Regime::Diverge => "diverge",
            Regime::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub regime: Regime,
    /// Stable fixed point, or the single root in the neutral case.
    pub fp_value: Option<f64>,
    /// Larger, repelling root when both roots are real.
    pub unstable_root: Option<f64>,
    /// `1 + 4 eps + 4 sqrt(eps^2 + eps / 2)`.
    pub threshold: f64,
    /// `beta y^2`.
    pub u: f64,
}

pub fn gamma_map(gamma: f64, beta: f64, y_sq: f64, eps: f64) -> f64 {
    (2.0 * eps + 1.0) * (beta + gamma).powi(2) / (beta * beta * y_sq + beta + gamma)
}

/// `d g / d gamma`.
pub fn gamma_map_derivative(gamma: f64, beta: f64, y_sq: f64, eps: f64) -> f64 {
    let d = beta * beta * y_sq + beta + gamma;
    (2.0 * eps + 1.0) * (beta + gamma) * (2.0 * d - (beta + gamma)) / (d * d)
}

pub fn threshold(eps: f64) -> f64 {
    1.0 + 4.0 * eps + 4.0 * (eps * eps + eps / 2.0).sqrt()
}

fn check_args(beta: f64, y_sq: f64, eps: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive and finite, got {beta}")));
    }
    if !(y_sq >= 0.0 && y_sq.is_finite()) {
        return Err(Error::InvalidArgument(format!("y^2 must be nonnegative, got {y_sq}")));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("shape must be nonnegative, got {eps}")));
    }
    Ok(())
}

pub fn classify_fixed_points(beta: f64, y_sq: f64, eps: f64) -> Result<FixedPointReport> {
    check_args(beta, y_sq, eps)?;
    let u = beta * y_sq;
    let t = threshold(eps);
    let mut report = FixedPointReport { regime: Regime::Diverge, fp_value: None, unstable_root: None, threshold: t, u };
    if eps == 0.0 {
        if u > 1.0 {
            report.regime = Regime::StableFp;
            report.fp_value = Some(beta / (u - 1.0));
        }
        return Ok(report);
    }
    if (u - t).abs() <= NEUTRAL_TOL * t {
        report.regime = Regime::Neutral;
        report.fp_value = Some(2.0 * beta * (1.0 + 2.0 * eps) / (u - 1.0 - 4.0 * eps));
        return Ok(report);
    }
    if u > t {
        let b = u - 4.0 * eps - 1.0;
        let root = (u * u - 8.0 * eps * u - 2.0 * u + 1.0).max(0.0).sqrt();
        report.regime = Regime::StableFp;
        report.fp_value = Some(2.0 * beta * (1.0 + 2.0 * eps) / (b + root));
        report.unstable_root = Some(beta * (b + root) / (4.0 * eps));
    }
    Ok(report)
}

/// Ratio of the stable fixed point with shape `eps` to the one with shape 0.
pub fn precision_ratio(beta_y_sq: f64, eps: f64) -> Result<f64> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("shape must be nonnegative, got {eps}")));
    }
    let t = threshold(eps);
    if !(beta_y_sq > t) || !beta_y_sq.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "beta y^2 = {beta_y_sq} is not above the threshold {t}; the ratio is unbounded or undefined"
        )));
    }
    let w = beta_y_sq - 1.0;
    let d = 1.0 - 4.0 * eps / w;
    let disc = (d * d - 8.0 * eps * (1.0 + 2.0 * eps) / (w * w)).max(0.0);
    Ok(2.0 * (1.0 + 2.0 * eps) / (d + disc.sqrt()))
}
