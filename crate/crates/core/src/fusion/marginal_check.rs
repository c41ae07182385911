//! Numerical check of the noise-marginalized likelihood: integrate the group
//! precision out by quadrature and compare with the closed form `||r||^-m`.

use serde::{Deserialize, Serialize};

use super::FusionProblem;
use crate::error::{Error, Result};
use crate::prob::stats::trapezoid;

const QUAD_REL_TOL: f64 = 1e-12;
const MAX_DEPTH: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub theta: Vec<f64>,
    /// Densities normalized on the support rescaled to [0, 1].
    pub closed_form: Vec<f64>,
    pub quadrature: Vec<f64>,
    pub max_deviation: f64,
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Tolerance(format!("adaptive Simpson did not converge on [{a}, {b}]")));
    }
    Ok(adaptive(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)?
        + adaptive(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)?)
}

fn integrate(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    adaptive(&f, a, fa, b, fb, whole, m, fm, tol, MAX_DEPTH)
}

/// `ln int_0^inf lambda^(m/2 - 1) exp(-lambda r^2 / 2) d lambda`, by adaptive
/// Simpson in `u = ln lambda` over a window around the integrand's peak.
pub fn log_marginal_precision(m: usize, r: f64) -> Result<f64> {
    let a = 0.5 * m as f64;
    let b = 0.5 * r * r;
    if !(b > 0.0) {
        return Err(Error::Domain("zero residual has no finite marginal".into()));
    }
    // integrand in u: exp(a u - b e^u), peaked at e^u = a / b
    let peak = (a / b).ln();
    let log_f = |u: f64| a * u - b * u.exp();
    let top = log_f(peak);
    let lo = peak - (80.0 / a + 10.0);
    let hi = peak + 10.0;
    // panels no wider than the peak's width, with the peak on a panel edge, so
    // that no Simpson sample set can straddle the mass and miss it
    let h = (1.0 / a.sqrt()).min(0.5);
    let left = ((peak - lo) / h).ceil() as usize;
    let right = ((hi - peak) / h).ceil() as usize;
    let tol = QUAD_REL_TOL / (left + right) as f64;
    let g = |u: f64| (log_f(u) - top).exp();
    // the integral is O(1) after the shift, so an absolute tolerance is relative
    let mut val = 0.0;
    for i in 0..left {
        val += integrate(g, peak - (i + 1) as f64 * h, peak - i as f64 * h, tol)?;
    }
    for i in 0..right {
        val += integrate(g, peak + i as f64 * h, peak + (i + 1) as f64 * h, tol)?;
    }
    Ok(top + val.ln())
}

fn normalize_log(log_d: &[f64], unit: &[f64]) -> Vec<f64> {
    let top = log_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d: Vec<f64> = log_d.iter().map(|v| (v - top).exp()).collect();
    let z = trapezoid(unit, &d);
    d.iter().map(|v| v / z).collect()
}

/// Compares the closed-form posterior `prod_i ||r_i||^-m_i` with the one
/// obtained by integrating each group's precision numerically. Both are
/// normalized on the support mapped to [0, 1]; returns the largest absolute
/// gap between the two densities.
pub fn verify_marginal_closed_form(problem: &FusionProblem, theta: &[f64]) -> Result<MarginalCheck> {
    if theta.len() < 2 {
        return Err(Error::Config("need at least two grid points".into()));
    }
    let (a, b) = problem.support();
    let unit: Vec<f64> = theta.iter().map(|t| (t - a) / (b - a)).collect();
    let sizes: Vec<usize> = problem.groups().iter().map(|g| g.len()).collect();
    let mut log_closed = Vec::with_capacity(theta.len());
    let mut log_quad = Vec::with_capacity(theta.len());
    for &t in theta {
        let norms = problem.residual_norms(t)?;
        log_closed.push(norms.iter().zip(&sizes).map(|(r, &m)| -(m as f64) * r.ln()).sum::<f64>());
        let mut q = 0.0;
        for (r, &m) in norms.iter().zip(&sizes) {
            q += log_marginal_precision(m, *r)?;
        }
        log_quad.push(q);
    }
    let closed_form = normalize_log(&log_closed, &unit);
    let quadrature = normalize_log(&log_quad, &unit);
    let max_deviation = closed_form
        .iter()
        .zip(&quadrature)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    Ok(MarginalCheck {
        theta: theta.to_vec(),
        closed_form,
        quadrature,
        max_deviation,
    })
}
