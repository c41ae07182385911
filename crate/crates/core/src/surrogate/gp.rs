//! Universal-kriging Gaussian process regression with an isotropic stationary kernel.
//!
//! Inputs are rescaled to the unit cube of the training design. The process
//! variance is profiled out of the likelihood in closed form, which leaves a
//! one-dimensional search over the correlation length.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Constant,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Also known as the absolute exponential kernel.
    Matern12,
    Matern32,
    Matern52,
    SquaredExponential,
}

impl Trend {
    pub const ALL: [Trend; 3] = [Trend::Constant, Trend::Linear, Trend::Quadratic];

    pub fn dof(&self, d: usize) -> usize {
        match self {
            Trend::Constant => 1,
            Trend::Linear => 1 + d,
            Trend::Quadratic => 1 + d + d * (d + 1) / 2,
        }
    }

    fn basis(&self, u: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        if *self == Trend::Constant {
            return;
        }
        out.extend_from_slice(u);
        if *self == Trend::Quadratic {
            for i in 0..u.len() {
                for j in i..u.len() {
                    out.push(u[i] * u[j]);
                }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Trend::Constant => "constant",
            Trend::Linear => "linear",
            Trend::Quadratic => "quadratic",
        }
    }
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [Kernel::Matern12, Kernel::Matern32, Kernel::Matern52, Kernel::SquaredExponential];

    /// Correlation at scaled distance `r = |x - x'| / l`.
    #[inline]
    pub fn correlation(&self, r: f64) -> f64 {
        match self {
            Kernel::Matern12 => (-r).exp(),
            Kernel::Matern32 => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            Kernel::Matern52 => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
            Kernel::SquaredExponential => (-0.5 * r * r).exp(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Kernel::Matern12 => "matern12",
            Kernel::Matern32 => "matern32",
            Kernel::Matern52 => "matern52",
            Kernel::SquaredExponential => "squared_exponential",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpOptions {
    pub nugget: f64,
    pub max_nugget: f64,
    pub multistarts: usize,
    /// The length-scale search runs on at most this many training points.
    pub search_subsample: usize,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            nugget: 1e-8,
            max_nugget: 1e-4,
            multistarts: 8,
            search_subsample: 250,
        }
    }
}

const LOG_L_BOUNDS: (f64, f64) = (-4.605_170_185_988_091, 4.605_170_185_988_091); // ln 1e-2, ln 1e2
const LOG_VAR_BOUNDS: (f64, f64) = (-13.815_510_557_964_274, 4.605_170_185_988_091); // ln 1e-6, ln 1e2
const GOLDEN_ITERS: usize = 30;
const REFINE_STEPS: usize = 6;
/// Admissible training-point misfit, relative to the target standard deviation.
const INTERP_TOL: f64 = 1e-7;
const SHRINK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSurrogate {
    pub trend: Trend,
    pub kernel: Kernel,
    pub beta: Vec<f64>,
    /// Correlation length in unit-cube coordinates.
    pub length_scale: f64,
    pub variance: f64,
    /// Relative nugget actually used (after escalation).
    pub nugget: f64,
    pub neg_log_likelihood: f64,
    /// Objective value at each multistart point; `None` where the fit was infeasible.
    pub start_objectives: Vec<Option<f64>>,
    /// Unit-cube training inputs, n x d.
    pub train_inputs: DMatrix<f64>,
    pub targets: Vec<f64>,
    pub lower: Vec<f64>,
    pub scale: Vec<f64>,
    /// `R^-1 (y - F beta)`.
    pub alpha: Vec<f64>,
}

struct Normalizer {
    lower: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalizer {
    fn fit(x: &DMatrix<f64>) -> Self {
        let d = x.ncols();
        let mut lower = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let col = x.column(j);
            let (lo, hi) = (col.min(), col.max());
            lower[j] = lo;
            scale[j] = if hi > lo { hi - lo } else { 1.0 };
        }
        Self { lower, scale }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.lower[j]) / self.scale[j])
    }
}

#[inline]
fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rows(u: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..u.nrows()).map(|i| u.row(i).iter().copied().collect()).collect()
}

fn design_matrix(trend: Trend, pts: &[Vec<f64>]) -> DMatrix<f64> {
    let d = pts.first().map_or(0, Vec::len);
    let q = trend.dof(d);
    let mut f = DMatrix::zeros(pts.len(), q);
    let mut buf = Vec::with_capacity(q);
    for (i, p) in pts.iter().enumerate() {
        trend.basis(p, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            f[(i, k)] = *v;
        }
    }
    f
}

fn correlation_matrix(kernel: Kernel, pts: &[Vec<f64>], length: f64) -> DMatrix<f64> {
    let n = pts.len();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0;
        for j in i + 1..n {
            let v = kernel.correlation(distance(&pts[i], &pts[j]) / length);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Cholesky of `R + tau I`, escalating `tau` by 10 until it factors.
fn factor(r: &DMatrix<f64>, nugget: f64, max_nugget: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut tau = nugget;
    loop {
        let mut m = r.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += tau;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, tau));
        }
        tau *= 10.0;
        if tau > max_nugget * (1.0 + 1e-9) {
            return Err(Error::Conditioning(format!(
                "correlation matrix not positive definite with nugget up to {max_nugget}"
            )));
        }
    }
}

struct Fit {
    objective: f64,
    beta: DVector<f64>,
    variance: f64,
    nugget: f64,
    alpha: DVector<f64>,
}

/// Generalized least squares trend plus profiled likelihood at one length scale.
fn fit_at(
    kernel: Kernel,
    pts: &[Vec<f64>],
    f: &DMatrix<f64>,
    y: &DVector<f64>,
    length: f64,
    target_var: f64,
    opts: &GpOptions,
) -> Result<Fit> {
    let interp_tol = INTERP_TOL * target_var.sqrt().max(f64::MIN_POSITIVE);
    let n = pts.len() as f64;
    let r = correlation_matrix(kernel, pts, length);
    let (chol, nugget) = factor(&r, opts.nugget, opts.max_nugget)?;
    let l = chol.l();
    let ft = l
        .solve_lower_triangular(f)
        .ok_or_else(|| Error::Conditioning("triangular solve failed".into()))?;
    let yt = l
        .solve_lower_triangular(y)
        .ok_or_else(|| Error::Conditioning("triangular solve failed".into()))?;
    let beta = ft
        .clone()
        .svd(true, true)
        .solve(&yt, 1e-12)
        .map_err(|e| Error::Conditioning(e.to_string()))?;
    let resid = yt - ft * &beta;
    let quad = resid.norm_squared();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let base = if target_var > 0.0 { target_var } else { 1.0 };
    let lo = base * LOG_VAR_BOUNDS.0.exp();
    let hi = base * LOG_VAR_BOUNDS.1.exp();
    let variance = (quad / n).clamp(lo, hi);
    // y^T K^-1 y + log det K with K = variance * (R + tau I)
    let objective = quad / variance + n * variance.ln() + log_det;
    let raw = y - f * &beta;
    let (alpha, err) = refine(&r, &chol, &raw);
    if err > interp_tol {
        return Err(Error::Conditioning(format!(
            "length {length}: training targets reproduced only to {err:e}"
        )));
    }
    Ok(Fit {
        objective,
        beta,
        variance,
        nugget,
        alpha,
    })
}

/// Solves `R alpha = b` using the nugget-stabilized factor as a preconditioner,
/// so training points are reproduced as if no nugget had been added.
/// Returns the solution and its largest residual.
fn refine(r: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let mut alpha = chol.solve(b);
    let mut err = b - r * &alpha;
    let mut norm = err.norm();
    for _ in 0..REFINE_STEPS {
        let next = &alpha + chol.solve(&err);
        let next_err = b - r * &next;
        let next_norm = next_err.norm();
        if !(next_norm < norm) {
            break;
        }
        alpha = next;
        err = next_err;
        norm = next_norm;
    }
    (alpha, err.amax())
}

fn subsample_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

/// Fits the trend, kernel length scale and variance by minimizing
/// `r^T K^-1 r + log det K` over a bounded log-space box from several starts.
pub fn fit_gp(inputs: &DMatrix<f64>, targets: &[f64], trend: Trend, kernel: Kernel, opts: &GpOptions) -> Result<GpSurrogate> {
    let (n, d) = inputs.shape();
    if targets.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} inputs", targets.len())));
    }
    let need = 5.max(trend.dof(d) + 1);
    if n < need {
        return Err(Error::Shape(format!("{} trend needs at least {need} points, got {n}", trend.label())));
    }
    if inputs.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite training data".into()));
    }
    let norm = Normalizer::fit(inputs);
    let u = norm.apply(inputs);
    let pts = rows(&u);
    let y = DVector::from_column_slice(targets);
    let mean = y.mean();
    let target_var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;

    let idx = subsample_indices(n, opts.search_subsample.max(need));
    let sub_pts: Vec<Vec<f64>> = idx.iter().map(|&i| pts[i].clone()).collect();
    let sub_f = design_matrix(trend, &sub_pts);
    let sub_y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| targets[i]));
    let objective = |log_l: f64| -> f64 {
        fit_at(kernel, &sub_pts, &sub_f, &sub_y, log_l.exp(), target_var, opts).map_or(f64::INFINITY, |f| f.objective)
    };

    let k = opts.multistarts.max(2);
    let (a, b) = LOG_L_BOUNDS;
    let starts: Vec<f64> = (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect();
    let start_objectives: Vec<f64> = starts.iter().map(|&s| objective(s)).collect();
    let best = (0..k)
        .min_by(|&i, &j| start_objectives[i].total_cmp(&start_objectives[j]))
        .unwrap_or(0);
    if !start_objectives[best].is_finite() {
        return Err(Error::Conditioning(format!(
            "{}/{} fit failed at every start",
            trend.label(),
            kernel.label()
        )));
    }

    // golden-section refinement inside the bracket of the best start
    let (mut lo, mut hi) = (starts[best.saturating_sub(1)], starts[(best + 1).min(k - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    let (mut best_x, mut best_f) = (starts[best], start_objectives[best]);
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = objective(x2);
        }
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx < best_f {
                best_x = x;
                best_f = fx;
            }
        }
    }

    // the full design is denser than the search subsample, so the chosen
    // length may be too smooth to interpolate it; shorten until it does
    let f_full = design_matrix(trend, &pts);
    let mut length = best_x.exp();
    let mut attempt = fit_at(kernel, &pts, &f_full, &y, length, target_var, opts);
    while attempt.is_err() && length > LOG_L_BOUNDS.0.exp() {
        length *= SHRINK;
        attempt = fit_at(kernel, &pts, &f_full, &y, length, target_var, opts);
    }
    let fit = attempt?;
    let alpha = fit.alpha;
    Ok(GpSurrogate {
        trend,
        kernel,
        beta: fit.beta.iter().copied().collect(),
        length_scale: length,
        variance: fit.variance,
        nugget: fit.nugget,
        neg_log_likelihood: best_f,
        start_objectives: start_objectives.iter().map(|v| v.is_finite().then_some(*v)).collect(),
        train_inputs: u,
        targets: targets.to_vec(),
        lower: norm.lower,
        scale: norm.scale,
        alpha: alpha.iter().copied().collect(),
    })
}

impl GpSurrogate {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn to_unit(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(x.iter().zip(&self.lower).zip(&self.scale).map(|((v, lo), s)| (v - lo) / s));
    }

    /// Posterior mean `f(x)^T beta + r(x)^T alpha`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut u = Vec::with_capacity(x.len());
        self.to_unit(x, &mut u);
        let mut basis = Vec::new();
        self.trend.basis(&u, &mut basis);
        let trend: f64 = basis.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let n = self.train_inputs.nrows();
        let mut s = 0.0;
        let mut row = vec![0.0; u.len()];
        for i in 0..n {
            for (j, r) in row.iter_mut().enumerate() {
                *r = self.train_inputs[(i, j)];
            }
            s += self.alpha[i] * self.kernel.correlation(distance(&u, &row) / self.length_scale);
        }
        trend + s
    }
}

pub fn gp_predict(model: &GpSurrogate, x: &[f64]) -> f64 {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_data(n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(n, 1, |i, _| 6.0 * i as f64 / (n - 1) as f64);
        let y = x.iter().map(|v| v.sin()).collect();
        (x, y)
    }

    #[test]
    fn interpolates_training_points() {
        let (x, y) = sin_data(20);
        for kernel in Kernel::ALL {
            for trend in Trend::ALL {
                let gp = fit_gp(&x, &y, trend, kernel, &GpOptions::default()).unwrap();
                for i in 0..20 {
                    let p = gp.predict(&[x[(i, 0)]]);
                    assert!((p - y[i]).abs() < 1e-6, "{trend:?}/{kernel:?} at {i}: {p} vs {} nugget {} l {}", y[i], gp.nugget, gp.length_scale);
                }
            }
        }
    }

    #[test]
    fn constant_targets_predict_the_constant() {
        let (x, _) = sin_data(12);
        let gp = fit_gp(&x, &[2.5; 12], Trend::Constant, Kernel::Matern52, &GpOptions::default()).unwrap();
        for t in [0.3, 2.2, 5.9, 40.0] {
            assert!((gp.predict(&[t]) - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn far_prediction_reverts_to_trend() {
        let (x, y) = sin_data(20);
        let gp = fit_gp(&x, &y, Trend::Constant, Kernel::Matern52, &GpOptions::default()).unwrap();
        let far = gp.predict(&[1e4]);
        assert!((far - gp.beta[0]).abs() <= 0.01 * gp.beta[0].abs().max(1e-3));
    }

    #[test]
    fn leave_one_out_predictivity_on_sine() {
        let (x, y) = sin_data(20);
        let mut press = 0.0;
        for i in 0..20 {
            let keep: Vec<usize> = (0..20).filter(|&j| j != i).collect();
            let xi = DMatrix::from_fn(19, 1, |r, _| x[(keep[r], 0)]);
            let yi: Vec<f64> = keep.iter().map(|&j| y[j]).collect();
            let gp = fit_gp(&xi, &yi, Trend::Constant, Kernel::Matern52, &GpOptions::default()).unwrap();
            press += (gp.predict(&[x[(i, 0)]]) - y[i]).powi(2);
        }
        let m = y.iter().sum::<f64>() / 20.0;
        let tss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        let q2 = 1.0 - press / tss;
        assert!(q2 > 0.95, "LOO Q2 {q2}");
    }

    #[test]
    fn prediction_matches_dense_solve() {
        let n = 25;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0 + 0.01 * i as f64);
        let y: Vec<f64> = (0..n).map(|i| (x[(i, 0)] * 3.0).cos() + x[(i, 1)] * x[(i, 1)]).collect();
        let gp = fit_gp(&x, &y, Trend::Linear, Kernel::Matern32, &GpOptions::default()).unwrap();
        // independent dense LU solve of R alpha = y - F beta
        let u = &gp.train_inputs;
        let kmat = DMatrix::from_fn(n, n, |i, j| {
            let r = ((u[(i, 0)] - u[(j, 0)]).powi(2) + (u[(i, 1)] - u[(j, 1)]).powi(2)).sqrt() / gp.length_scale;
            Kernel::Matern32.correlation(r)
        });
        let resid = DVector::from_fn(n, |i, _| y[i] - gp.beta[0] - gp.beta[1] * u[(i, 0)] - gp.beta[2] * u[(i, 1)]);
        let alpha = kmat.lu().solve(&resid).unwrap();
        let q = [0.37, 0.81];
        let uq = [(q[0] - gp.lower[0]) / gp.scale[0], (q[1] - gp.lower[1]) / gp.scale[1]];
        let kq = DVector::from_fn(n, |i, _| {
            let r = ((uq[0] - u[(i, 0)]).powi(2) + (uq[1] - u[(i, 1)]).powi(2)).sqrt() / gp.length_scale;
            Kernel::Matern32.correlation(r)
        });
        let dense = gp.beta[0] + gp.beta[1] * uq[0] + gp.beta[2] * uq[1] + kq.dot(&alpha);
        assert!((gp_predict(&gp, &q) - dense).abs() < 1e-9);
    }

    #[test]
    fn optimum_beats_every_start() {
        let (x, y) = sin_data(30);
        let gp = fit_gp(&x, &y, Trend::Quadratic, Kernel::SquaredExponential, &GpOptions::default()).unwrap();
        assert_eq!(gp.start_objectives.len(), 8);
        assert!(gp.start_objectives.iter().flatten().all(|&s| gp.neg_log_likelihood <= s));
    }

    #[test]
    fn too_few_points_is_a_shape_error() {
        let (x, y) = sin_data(4);
        assert!(matches!(
            fit_gp(&x, &y, Trend::Constant, Kernel::Matern12, &GpOptions::default()),
            Err(Error::Shape(_))
        ));
    }
}
