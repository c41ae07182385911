//! Forward degradation models and synthetic data generation.

pub mod data;
pub mod grid;
pub mod paris;
pub mod reset;

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{generate_data_groups, load_data_csv, write_data_csv, DataGroup, GroupSpec};
pub use grid::TimeGrid;
pub use paris::{first_crossing, paris_trajectory, ParisInputs, ParisModel, PARIS_NAMES};
pub use reset::{piecewise_reset_trajectory, FixedSegmentLaws, PiecewiseResetModel, SegmentLaw, RESET_NAMES};

use crate::error::{Error, Result};

/// A deterministic map from an input vector to a trajectory on a fixed grid.
pub trait Simulator: Send + Sync {
    fn dim(&self) -> usize;
    fn grid(&self) -> &TimeGrid;
    fn simulate(&self, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} values for a {}-node grid", values.len(), grid.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("degradation values must be finite and non-negative, got {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        self.grid.interpolate(&self.values, t)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = String::from("time,value\n");
        for (t, v) in self.grid.points().iter().zip(&self.values) {
            buf.push_str(&format!("{t},{v}\n"));
        }
        f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Outputs for every row of `inputs` (n x d), returned as an N x n matrix with
/// one trajectory per column. The first failing row is reported by index.
pub fn evaluate_model_batch(model: &dyn Simulator, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if inputs.ncols() != model.dim() {
        return Err(Error::Shape(format!(
            "design has {} columns but the model takes {} inputs",
            inputs.ncols(),
            model.dim()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..inputs.nrows())
        .map(|i| inputs.row(i).iter().copied().collect())
        .collect();
    let outputs: Vec<Result<Vec<f64>>> = rows.par_iter().map(|x| model.simulate(x)).collect();
    let n_t = model.grid().len();
    let mut out = DMatrix::zeros(n_t, rows.len());
    for (i, r) in outputs.into_iter().enumerate() {
        let v = r.map_err(|e| Error::Row { row: i, source: Box::new(e) })?;
        out.column_mut(i).copy_from_slice(&v);
    }
    Ok(out)
}
