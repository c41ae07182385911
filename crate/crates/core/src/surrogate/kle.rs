//! Karhunen-Loeve (SVD) reduction of an output ensemble.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleBasis {
    /// N x m, orthonormal columns.
    pub modes: DMatrix<f64>,
    /// Raw singular values of the (optionally centered) output matrix, not divided by n.
    pub singular_values: Vec<f64>,
    /// All singular values, retained or not.
    pub full_spectrum: Vec<f64>,
    pub truncation_fraction: f64,
    pub centered: bool,
    /// Row means of the outputs when centered, zeros otherwise.
    pub mean_trajectory: DVector<f64>,
}

impl KleBasis {
    pub fn mode_count(&self) -> usize {
        self.modes.ncols()
    }

    pub fn output_len(&self) -> usize {
        self.modes.nrows()
    }

    /// `mean + Phi c`.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<DVector<f64>> {
        if coefficients.len() != self.mode_count() {
            return Err(Error::Shape(format!(
                "{} coefficients for {} modes",
                coefficients.len(),
                self.mode_count()
            )));
        }
        let mut out = self.mean_trajectory.clone();
        for (k, &c) in coefficients.iter().enumerate() {
            out.axpy(c, &self.modes.column(k), 1.0);
        }
        Ok(out)
    }

    /// Squared Frobenius energy of the discarded singular values.
    pub fn discarded_energy(&self) -> f64 {
        self.full_spectrum[self.mode_count()..].iter().map(|s| s * s).sum()
    }
}

/// SVD of `y` (N x n, one trajectory per column). Keeps the fewest modes whose
/// squared singular values reach `truncation_fraction` of the total.
pub fn kle_decompose(y: &DMatrix<f64>, truncation_fraction: f64, centered: bool) -> Result<KleBasis> {
    let (n_t, n) = y.shape();
    if n < 2 {
        return Err(Error::Shape(format!("decomposition needs at least 2 trajectories, got {n}")));
    }
    if !(truncation_fraction > 0.0 && truncation_fraction <= 1.0) {
        return Err(Error::Config(format!("truncation fraction must lie in (0, 1], got {truncation_fraction}")));
    }
    let mean = if centered {
        DVector::from_fn(n_t, |i, _| y.row(i).mean())
    } else {
        DVector::zeros(n_t)
    };
    let mut work = y.clone();
    if centered {
        for mut col in work.column_iter_mut() {
            col -= &mean;
        }
    }
    let svd = work.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::DegenerateSample("SVD did not return left vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let top = sv.first().copied().unwrap_or(0.0);
    let tol = top * n_t.max(n) as f64 * f64::EPSILON;
    let rank = sv.iter().take_while(|&&s| s > tol).count();
    if rank == 0 {
        return Err(Error::DegenerateSample("output matrix has rank 0".into()));
    }
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let mut m = rank;
    for (k, s) in sv.iter().take(rank).enumerate() {
        acc += s * s;
        if acc >= truncation_fraction * total * (1.0 - 1e-14) {
            m = k + 1;
            break;
        }
    }
    let modes = DMatrix::from_fn(n_t, m, |i, k| u[(i, order[k])]);
    Ok(KleBasis {
        modes,
        singular_values: sv[..m].to_vec(),
        full_spectrum: sv,
        truncation_fraction,
        centered,
        mean_trajectory: mean,
    })
}

/// Mode coefficients, m x n: entry (k, i) is `<y_i - mean, Phi_k>`.
pub fn project_modes(y: &DMatrix<f64>, basis: &KleBasis) -> Result<DMatrix<f64>> {
    if y.nrows() != basis.output_len() {
        return Err(Error::Shape(format!(
            "outputs have {} rows, basis has {}",
            y.nrows(),
            basis.output_len()
        )));
    }
    let mut work = y.clone();
    for mut col in work.column_iter_mut() {
        col -= &basis.mean_trajectory;
    }
    Ok(basis.modes.transpose() * work)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::rng_from_seed;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5)
    }

    fn orthonormality_error(b: &KleBasis) -> f64 {
        let g = b.modes.transpose() * &b.modes;
        (g - DMatrix::identity(b.mode_count(), b.mode_count())).amax()
    }

    #[test]
    fn rank_one_is_exact() {
        let u = DVector::from_fn(30, |i, _| (i as f64 * 0.1).sin() + 2.0);
        let v = DVector::from_fn(12, |i, _| 1.0 + i as f64);
        let y = &u * v.transpose();
        let b = kle_decompose(&y, 0.99, false).unwrap();
        assert_eq!(b.mode_count(), 1);
        let c = project_modes(&y, &b).unwrap();
        let rec = &b.modes * &c;
        assert!((rec - &y).amax() < 1e-10);
        // coefficients are proportional to v
        let ratio = c[(0, 0)] / v[0];
        for i in 0..12 {
            assert!((c[(0, i)] - ratio * v[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn full_fraction_keeps_numerical_rank() {
        let y = random(40, 15, 3);
        let b = kle_decompose(&y, 1.0, false).unwrap();
        assert_eq!(b.mode_count(), 15);
        let rec = &b.modes * project_modes(&y, &b).unwrap();
        assert!((rec - &y).norm() / y.norm() < 1e-8);
        assert!(orthonormality_error(&b) < 1e-10);
    }

    #[test]
    fn residual_energy_equals_discarded_spectrum() {
        let y = random(100, 50, 7);
        for centered in [false, true] {
            let b = kle_decompose(&y, 0.9, centered).unwrap();
            assert!(orthonormality_error(&b) < 1e-10);
            let c = project_modes(&y, &b).unwrap();
            let mut rec = &b.modes * c;
            for mut col in rec.column_iter_mut() {
                col += &b.mean_trajectory;
            }
            let resid = (&y - rec).norm_squared();
            assert!(((resid - b.discarded_energy()) / b.discarded_energy()).abs() < 1e-8);
            let total: f64 = b.full_spectrum.iter().map(|s| s * s).sum();
            assert!(resid / total <= 0.1 + 1e-12);
            assert!(b.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn projecting_a_mode_gives_unit_vector() {
        let y = random(20, 10, 1);
        let b = kle_decompose(&y, 0.95, false).unwrap();
        let phi = DMatrix::from_column_slice(20, 1, b.modes.column(1).as_slice());
        let c = project_modes(&phi, &b).unwrap();
        for k in 0..b.mode_count() {
            let e = if k == 1 { 1.0 } else { 0.0 };
            assert!((c[(k, 0)] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        assert!(matches!(kle_decompose(&DMatrix::zeros(5, 4), 0.9, false), Err(Error::DegenerateSample(_))));
    }
}
