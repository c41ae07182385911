//! Kullback-Leibler information gain of a posterior sample against a reference marginal.

use super::kde::{BandwidthRule, TruncatedKde};
use super::marginal::Marginal;
use super::stats::{linspace, trapezoid};
use crate::error::{Error, Result};

/// Number of quadrature nodes spanning the support.
pub const KL_GRID_POINTS: usize = 512;
/// Densities are floored here before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-12;

fn check_support(sample: &[f64], support: (f64, f64)) -> Result<()> {
    let (a, b) = support;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Domain(format!("support [{a}, {b}] must be a finite interval")));
    }
    if let Some(x) = sample.iter().find(|&&x| !(x >= a && x <= b)) {
        return Err(Error::Domain(format!("sample point {x} lies outside support [{a}, {b}]")));
    }
    Ok(())
}

fn kl_against<F: Fn(f64) -> f64>(sample: &[f64], support: (f64, f64), reference: F) -> Result<f64> {
    check_support(sample, support)?;
    let kde = TruncatedKde::new(sample.to_vec(), BandwidthRule::Silverman, support.0, support.1)?;
    let grid = linspace(support.0, support.1, KL_GRID_POINTS);
    let integrand: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let p = kde.pdf(x).max(DENSITY_FLOOR);
            let q = reference(x).max(DENSITY_FLOOR);
            p * (p / q).ln()
        })
        .collect();
    Ok(trapezoid(&grid, &integrand).max(0.0))
}

/// KL(posterior || U(support)), the posterior represented by a truncated KDE.
/// Small negative values from estimator error are clamped to zero.
pub fn kl_vs_uniform(posterior_sample: &[f64], support: (f64, f64)) -> Result<f64> {
    let width = support.1 - support.0;
    kl_against(posterior_sample, support, |_| 1.0 / width)
}

/// KL(posterior || reference) on the given support. Used when the reference
/// marginal is no longer uniform (a variable selected a second time).
pub fn kl_vs_marginal(posterior_sample: &[f64], support: (f64, f64), reference: &Marginal) -> Result<f64> {
    if let Marginal::Uniform { lower, upper } = *reference {
        if (lower, upper) == support {
            return kl_vs_uniform(posterior_sample, support);
        }
    }
    kl_against(posterior_sample, support, |x| reference.pdf(x))
}
