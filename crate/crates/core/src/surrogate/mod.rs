//! Reduced-basis Gaussian-process surrogates and their convex aggregation.

pub mod gp;
pub mod kle;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gp::{fit_gp, gp_predict, GpOptions, GpSurrogate, Kernel, Trend};
pub use kle::{kle_decompose, project_modes, KleBasis};

use crate::error::{Error, Result};
use crate::models::TimeGrid;
use crate::prob::SimplexWeights;

/// Archive layout version written by [`SurrogateEnsemble::save`].
pub const FORMAT_VERSION: u32 = 1;

/// One KLE basis with a GP per retained mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub trend: Trend,
    pub kernel: Kernel,
    pub basis: KleBasis,
    pub mode_gps: Vec<GpSurrogate>,
}

impl Member {
    pub fn label(&self) -> String {
        format!("{}/{}", self.trend.label(), self.kernel.label())
    }

    pub fn predict(&self, x: &[f64]) -> DVector<f64> {
        let mut out = self.basis.mean_trajectory.clone();
        for (k, gp) in self.mode_gps.iter().enumerate() {
            out.axpy(gp.predict(x), &self.basis.modes.column(k), 1.0);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEnsemble {
    pub format_version: u32,
    /// Time instants the members predict on.
    pub times: Vec<f64>,
    pub input_dim: usize,
    pub members: Vec<Member>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    pub trends: Vec<Trend>,
    pub kernels: Vec<Kernel>,
    pub truncation_fraction: f64,
    pub centered: bool,
    pub gp: GpOptions,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            trends: Trend::ALL.to_vec(),
            kernels: Kernel::ALL.to_vec(),
            truncation_fraction: 0.99,
            centered: false,
            gp: GpOptions::default(),
        }
    }
}

/// Outputs (N x n on `grid`) linearly interpolated to `times` (|times| x n).
pub fn interpolate_outputs(outputs: &DMatrix<f64>, grid: &TimeGrid, times: &[f64]) -> Result<DMatrix<f64>> {
    if outputs.nrows() != grid.len() {
        return Err(Error::Shape(format!("{} output rows for a {}-node grid", outputs.nrows(), grid.len())));
    }
    let locs = times.iter().map(|&t| grid.locate(t)).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(times.len(), outputs.ncols(), |l, r| {
        let (i, frac) = locs[l];
        crate::models::grid::lerp(outputs[(i, r)], outputs[(i + 1, r)], frac)
    }))
}

/// Trains one member per (trend, kernel) pair on the DoE outputs at `times`.
/// Members whose fit fails are dropped with a warning.
pub fn build_ensemble(
    doe_inputs: &DMatrix<f64>,
    outputs_at_times: &DMatrix<f64>,
    times: &[f64],
    opts: &EnsembleOptions,
) -> Result<SurrogateEnsemble> {
    let n = doe_inputs.nrows();
    if outputs_at_times.shape() != (times.len(), n) {
        return Err(Error::Shape(format!(
            "outputs are {:?}, expected {:?}",
            outputs_at_times.shape(),
            (times.len(), n)
        )));
    }
    let basis = kle_decompose(outputs_at_times, opts.truncation_fraction, opts.centered)?;
    let coeffs = project_modes(outputs_at_times, &basis)?;
    let grid: Vec<(Trend, Kernel)> = opts
        .trends
        .iter()
        .flat_map(|&t| opts.kernels.iter().map(move |&k| (t, k)))
        .collect();
    let fitted: Vec<Result<Member>> = grid
        .par_iter()
        .map(|&(trend, kernel)| {
            let mode_gps = (0..basis.mode_count())
                .map(|k| {
                    let y: Vec<f64> = coeffs.row(k).iter().copied().collect();
                    fit_gp(doe_inputs, &y, trend, kernel, &opts.gp)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Member {
                trend,
                kernel,
                basis: basis.clone(),
                mode_gps,
            })
        })
        .collect();
    let mut members = Vec::with_capacity(fitted.len());
    for ((trend, kernel), r) in grid.iter().zip(fitted) {
        match r {
            Ok(m) => members.push(m),
            Err(e) => log::warn!("dropping ensemble member {}/{}: {e}", trend.label(), kernel.label()),
        }
    }
    if members.is_empty() {
        return Err(Error::Conditioning("every ensemble member failed to fit".into()));
    }
    Ok(SurrogateEnsemble {
        format_version: FORMAT_VERSION,
        times: times.to_vec(),
        input_dim: doe_inputs.ncols(),
        members,
    })
}

impl SurrogateEnsemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.members.iter().map(Member::label).collect()
    }

    /// Every member's prediction at `x`, one column per member.
    pub fn member_predictions(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!("{} inputs for a {}-input ensemble", x.len(), self.input_dim)));
        }
        let cols: Vec<DVector<f64>> = self.members.iter().map(|m| m.predict(x)).collect();
        Ok(DMatrix::from_columns(&cols))
    }

    pub fn predict(&self, w: &SimplexWeights, x: &[f64]) -> Result<DVector<f64>> {
        let preds = self.member_predictions(x)?;
        combine(&preds, w.as_slice())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let e: SurrogateEnsemble = serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        if e.format_version != FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "{}: archive format {} is not supported (expected {FORMAT_VERSION})",
                path.display(),
                e.format_version
            )));
        }
        Ok(e)
    }
}

/// `sum_j w_j * preds[:, j]`.
pub fn combine(preds: &DMatrix<f64>, w: &[f64]) -> Result<DVector<f64>> {
    if w.len() != preds.ncols() {
        return Err(Error::Shape(format!("{} weights for {} members", w.len(), preds.ncols())));
    }
    let mut out = DVector::zeros(preds.nrows());
    for (j, &wj) in w.iter().enumerate() {
        out.axpy(wj, &preds.column(j), 1.0);
    }
    Ok(out)
}

pub fn ensemble_predict(ensemble: &SurrogateEnsemble, w: &SimplexWeights, x: &[f64]) -> Result<DVector<f64>> {
    ensemble.predict(w, x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q2Score {
    /// `None` where the test outputs have zero variance.
    pub per_time: Vec<Option<f64>>,
    pub averaged: f64,
}

/// Predictivity `1 - SSE / SST` per output time, averaged over defined times.
/// `test_outputs` is |times| x n_test.
pub fn q2_score<F>(predictor: F, test_inputs: &DMatrix<f64>, test_outputs: &DMatrix<f64>) -> Result<Q2Score>
where
    F: Fn(&[f64]) -> Result<DVector<f64>> + Sync,
{
    let n = test_inputs.nrows();
    if test_outputs.ncols() != n {
        return Err(Error::Shape(format!("{} test outputs for {n} inputs", test_outputs.ncols())));
    }
    if n < 10 {
        return Err(Error::Config(format!("Q2 needs at least 10 test points, got {n}")));
    }
    let preds = (0..n)
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = test_inputs.row(i).iter().copied().collect();
            predictor(&x)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_t = test_outputs.nrows();
    let mut per_time = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let obs = test_outputs.row(t);
        let mean = obs.mean();
        let sst: f64 = obs.iter().map(|v| (v - mean) * (v - mean)).sum();
        if sst <= 0.0 {
            per_time.push(None);
            continue;
        }
        let sse: f64 = (0..n).map(|i| (obs[i] - preds[i][t]).powi(2)).sum();
        per_time.push(Some(1.0 - sse / sst));
    }
    let defined: Vec<f64> = per_time.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::DegenerateSample("test outputs have zero variance at every time".into()));
    }
    let averaged = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(Q2Score { per_time, averaged })
}

/// Time-averaged Q2 of every member on a held-out set; members below 0.5 are flagged.
pub fn member_q2(ensemble: &SurrogateEnsemble, test_inputs: &DMatrix<f64>, test_outputs: &DMatrix<f64>) -> Result<Vec<f64>> {
    ensemble
        .members
        .iter()
        .map(|m| {
            let s = q2_score(|x| Ok(m.predict(x)), test_inputs, test_outputs)?;
            if s.averaged < 0.5 {
                log::warn!("ensemble member {} has low predictivity Q2 = {:.3}", m.label(), s.averaged);
            }
            Ok(s.averaged)
        })
        .collect()
}
