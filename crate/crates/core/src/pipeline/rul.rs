//! Remaining-useful-life distributions pushed forward from trajectory ensembles.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{first_crossing, TimeGrid};
use crate::prob::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulDistribution {
    pub threshold: f64,
    pub current_time: f64,
    pub times: Vec<f64>,
    /// Fraction of trajectories at or above the threshold at each time.
    pub cdf: Vec<f64>,
    pub sample_size: usize,
}

impl RulDistribution {
    /// `time,cdf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,cdf\n");
        for (t, c) in self.times.iter().zip(&self.cdf) {
            s.push_str(&format!("{t},{c}\n"));
        }
        s
    }
}

fn check(trajectories: &DMatrix<f64>, grid: &TimeGrid, current_time: f64) -> Result<()> {
    if trajectories.ncols() == 0 {
        return Err(Error::Config("RUL needs at least one trajectory".into()));
    }
    if trajectories.nrows() != grid.len() {
        return Err(Error::Shape(format!(
            "{} trajectory rows for a {}-node grid",
            trajectories.nrows(),
            grid.len()
        )));
    }
    if !grid.contains(current_time) {
        return Err(Error::Domain(format!("current time {current_time} is outside the simulation horizon")));
    }
    Ok(())
}

/// Monte Carlo CDF of the RUL: for each grid time after `current_time`, the
/// share of trajectories (columns) whose value has reached `threshold`.
pub fn rul_cdf(trajectories: &DMatrix<f64>, grid: &TimeGrid, threshold: f64, current_time: f64) -> Result<RulDistribution> {
    check(trajectories, grid, current_time)?;
    if !(threshold >= 0.0) {
        return Err(Error::Config(format!("threshold must be non-negative, got {threshold}")));
    }
    let n = trajectories.ncols();
    let (times, cdf) = grid
        .points()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > current_time)
        .map(|(i, &t)| {
            let hits = trajectories.row(i).iter().filter(|&&v| v >= threshold).count();
            (t, hits as f64 / n as f64)
        })
        .unzip();
    Ok(RulDistribution {
        threshold,
        current_time,
        times,
        cdf,
        sample_size: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulSummary {
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
    /// Share of trajectories that never reach the threshold inside the horizon;
    /// they are counted at the horizon end.
    pub censored_fraction: f64,
}

/// Per-trajectory RUL `crossing - current_time`, crossings interpolated within a
/// grid cell. Trajectories already past the threshold give 0; those that never
/// cross are censored at the horizon end.
pub fn rul_samples(trajectories: &DMatrix<f64>, grid: &TimeGrid, threshold: f64, current_time: f64) -> Result<(Vec<f64>, usize)> {
    check(trajectories, grid, current_time)?;
    let mut censored = 0;
    let horizon = grid.end() - current_time;
    let samples = trajectories
        .column_iter()
        .map(|c| match first_crossing(grid, c.as_slice(), threshold) {
            Some(t) => (t - current_time).max(0.0),
            None => {
                censored += 1;
                horizon
            }
        })
        .collect();
    Ok((samples, censored))
}

pub fn summarize_rul(trajectories: &DMatrix<f64>, grid: &TimeGrid, threshold: f64, current_time: f64) -> Result<RulSummary> {
    let (s, censored) = rul_samples(trajectories, grid, threshold, current_time)?;
    Ok(RulSummary {
        mean: stats::mean(&s),
        variance: stats::variance(&s),
        median: stats::median(&s),
        censored_fraction: censored as f64 / s.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ensemble() -> (DMatrix<f64>, TimeGrid) {
        let grid = TimeGrid::regular(0.0, 1.0, 10.0).unwrap();
        // rates 0.1 .. 0.5 from a start of 0.2
        let y = DMatrix::from_fn(grid.len(), 5, |i, j| 0.2 + 0.1 * (j + 1) as f64 * i as f64);
        (y, grid)
    }

    #[test]
    fn zero_threshold_is_certain_and_high_threshold_impossible() {
        let (y, g) = ensemble();
        assert!(rul_cdf(&y, &g, 0.0, 2.0).unwrap().cdf.iter().all(|&c| c == 1.0));
        assert!(rul_cdf(&y, &g, 100.0, 2.0).unwrap().cdf.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn cdf_monotone_in_time_and_threshold() {
        let (y, g) = ensemble();
        let a = rul_cdf(&y, &g, 1.0, 1.5).unwrap();
        assert_eq!(a.times.first(), Some(&2.0));
        assert!(a.cdf.windows(2).all(|w| w[1] >= w[0]));
        let b = rul_cdf(&y, &g, 1.5, 1.5).unwrap();
        assert!(a.cdf.iter().zip(&b.cdf).all(|(x, y)| x >= y));
        assert!(a.to_csv().starts_with("time,cdf\n2,"));
    }

    #[test]
    fn samples_and_censoring() {
        let (y, g) = ensemble();
        let (s, censored) = rul_samples(&y, &g, 1.1, 0.0).unwrap();
        assert_eq!(censored, 0);
        assert!((s[0] - 9.0).abs() < 1e-9 && (s[4] - 1.8).abs() < 1e-9);
        let (_, censored) = rul_samples(&y, &g, 4.0, 0.0).unwrap();
        assert_eq!(censored, 3);
        assert!(rul_cdf(&DMatrix::zeros(11, 0), &g, 1.0, 0.0).is_err());
    }
}
