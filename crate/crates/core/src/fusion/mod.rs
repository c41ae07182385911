//! Noise-marginalized posterior of one scalar input given several data groups.
//!
//! With a per-group precision integrated out, group `i` contributes
//! `-m_i ln ||y_i - G_i(theta)||` to the log-posterior. In surrogate mode the
//! forward model is a convex combination of ensemble members whose weights are
//! themselves integrated out by Monte Carlo over the simplex.

pub mod marginal_check;

use std::sync::Arc;

use nalgebra::DMatrix;

pub use marginal_check::{verify_marginal_closed_form, MarginalCheck};

use crate::error::{Error, Result};
use crate::models::grid::lerp;
use crate::models::{DataGroup, Simulator, TimeGrid};
use crate::surrogate::{combine, SurrogateEnsemble};

/// Linear interpolation of `values` (on `grid`) at `times`; extrapolation is a domain error.
pub fn interpolate_to_group(values: &[f64], grid: &TimeGrid, times: &[f64]) -> Result<Vec<f64>> {
    times.iter().map(|&t| grid.interpolate(values, t)).collect()
}

#[derive(Clone)]
pub enum Forward {
    Direct(Arc<dyn Simulator>),
    Ensemble {
        ensemble: Arc<SurrogateEnsemble>,
        /// M x p Dirichlet draws, frozen for the lifetime of the problem.
        weights: DMatrix<f64>,
    },
}

/// Precomputed `(cell, fraction)` of every observation on the prediction grid.
#[derive(Debug, Clone)]
struct GroupOperator {
    locs: Vec<(usize, f64)>,
}

impl GroupOperator {
    fn new(grid: &TimeGrid, times: &[f64]) -> Result<Self> {
        Ok(Self {
            locs: times.iter().map(|&t| grid.locate(t)).collect::<Result<_>>()?,
        })
    }

    fn residual_norm(&self, values: &[f64], y: &[f64]) -> f64 {
        self.locs
            .iter()
            .zip(y)
            .map(|(&(i, frac), &obs)| {
                let r = obs - lerp(values[i], values[i + 1], frac);
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone)]
pub struct FusionProblem {
    groups: Vec<DataGroup>,
    forward: Forward,
    nominal: Vec<f64>,
    active: usize,
    support: (f64, f64),
    operators: Vec<GroupOperator>,
}

impl std::fmt::Debug for FusionProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FusionProblem")
            .field("groups", &self.groups.len())
            .field("mode", &if self.is_direct() { "direct" } else { "ensemble" })
            .field("active", &self.active)
            .field("support", &self.support)
            .finish()
    }
}

impl FusionProblem {
    fn build(
        groups: Vec<DataGroup>,
        forward: Forward,
        grid: &TimeGrid,
        nominal: Vec<f64>,
        active: usize,
        support: (f64, f64),
        dim: usize,
    ) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Config("fusion needs at least one data group".into()));
        }
        if nominal.len() != dim || active >= dim {
            return Err(Error::Shape(format!(
                "nominal of length {} with active index {active} for a {dim}-input model",
                nominal.len()
            )));
        }
        if !(support.0 < support.1 && support.0.is_finite() && support.1.is_finite()) {
            return Err(Error::Domain(format!("invalid support {support:?}")));
        }
        let operators = groups
            .iter()
            .map(|g| GroupOperator::new(grid, &g.times))
            .collect::<Result<_>>()?;
        Ok(Self {
            groups,
            forward,
            nominal,
            active,
            support,
            operators,
        })
    }

    /// Simulator forward model; inactive inputs stay at `nominal`.
    pub fn direct(
        groups: Vec<DataGroup>,
        model: Arc<dyn Simulator>,
        nominal: Vec<f64>,
        active: usize,
        support: (f64, f64),
    ) -> Result<Self> {
        let grid = model.grid().clone();
        let dim = model.dim();
        Self::build(groups, Forward::Direct(model), &grid, nominal, active, support, dim)
    }

    /// Ensemble forward model with `weights` (M x p) fixed for every evaluation.
    pub fn ensemble(
        groups: Vec<DataGroup>,
        ensemble: Arc<SurrogateEnsemble>,
        weights: DMatrix<f64>,
        nominal: Vec<f64>,
        active: usize,
        support: (f64, f64),
    ) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() != ensemble.len() {
            return Err(Error::Shape(format!(
                "weight sample is {:?} for {} members",
                weights.shape(),
                ensemble.len()
            )));
        }
        let grid = TimeGrid::new(ensemble.times.clone())?;
        let dim = ensemble.input_dim;
        Self::build(groups, Forward::Ensemble { ensemble, weights }, &grid, nominal, active, support, dim)
    }

    pub fn groups(&self) -> &[DataGroup] {
        &self.groups
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.forward, Forward::Direct(_))
    }

    fn input_at(&self, theta: f64) -> Vec<f64> {
        let mut x = self.nominal.clone();
        x[self.active] = theta;
        x
    }

    fn in_support(&self, theta: f64) -> bool {
        theta >= self.support.0 && theta <= self.support.1
    }

    /// Residual norms `||y_i - G_i(theta)||` of every group (direct mode).
    pub fn residual_norms(&self, theta: f64) -> Result<Vec<f64>> {
        let Forward::Direct(model) = &self.forward else {
            return Err(Error::Config("residual norms need the direct forward model".into()));
        };
        let values = model.simulate(&self.input_at(theta))?;
        Ok(self
            .operators
            .iter()
            .zip(&self.groups)
            .map(|(op, g)| op.residual_norm(&values, &g.values))
            .collect())
    }

    fn score(&self, values: &[f64]) -> f64 {
        let mut s = 0.0;
        for (op, g) in self.operators.iter().zip(&self.groups) {
            let norm = op.residual_norm(values, &g.values);
            if norm == 0.0 {
                return f64::INFINITY;
            }
            s -= g.len() as f64 * norm.ln();
        }
        s
    }

    /// `sum_i -m_i ln ||y_i - G_i(theta)||`; `-inf` outside the support and
    /// `+inf` on an exact fit.
    pub fn log_posterior_direct(&self, theta: f64) -> Result<f64> {
        let Forward::Direct(model) = &self.forward else {
            return Err(Error::Config("direct log-posterior needs the direct forward model".into()));
        };
        if !self.in_support(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        let values = model.simulate(&self.input_at(theta))?;
        Ok(self.score(&values))
    }

    /// `log (1/M) sum_i exp(S_i)` over the frozen weight draws, shifted by the
    /// largest `S_i` for stability.
    pub fn log_posterior_marginalized(&self, theta: f64) -> Result<f64> {
        let Forward::Ensemble { ensemble, weights } = &self.forward else {
            return Err(Error::Config("marginalized log-posterior needs the ensemble forward model".into()));
        };
        if !self.in_support(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        let preds = ensemble.member_predictions(&self.input_at(theta))?;
        let scores: Vec<f64> = weights
            .row_iter()
            .map(|w| {
                let w: Vec<f64> = w.iter().copied().collect();
                combine(&preds, &w).map(|g| self.score(g.as_slice()))
            })
            .collect::<Result<_>>()?;
        Ok(log_mean_exp(&scores))
    }

    /// Dispatches on the forward model.
    pub fn log_posterior(&self, theta: f64) -> Result<f64> {
        match self.forward {
            Forward::Direct(_) => self.log_posterior_direct(theta),
            Forward::Ensemble { .. } => self.log_posterior_marginalized(theta),
        }
    }
}

/// `log (1/M) sum exp(s_i)`, computed as `C + log sum exp(s_i - C) - log M`.
pub fn log_mean_exp(scores: &[f64]) -> f64 {
    let c = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !c.is_finite() {
        return c;
    }
    let s: f64 = scores.iter().map(|v| (v - c).exp()).sum();
    c + s.ln() - (scores.len() as f64).ln()
}
