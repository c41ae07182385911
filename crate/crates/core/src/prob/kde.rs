//! Gaussian kernel density estimation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::stats;
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// How the kernel bandwidth is chosen from a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// 1.06 * sd * n^(-1/5)
    #[default]
    Silverman,
    Fixed(f64),
}

impl BandwidthRule {
    pub fn bandwidth(&self, sample: &[f64]) -> Result<f64> {
        check_sample(sample)?;
        match *self {
            BandwidthRule::Silverman => {
                let sd = stats::std_dev(sample);
                Ok(1.06 * sd * (sample.len() as f64).powf(-0.2))
            }
            BandwidthRule::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            BandwidthRule::Fixed(h) => Err(Error::Config(format!("bandwidth must be positive, got {h}"))),
        }
    }
}

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "kernel density estimation needs at least 2 points, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample("sample contains non-finite values".into()));
    }
    if stats::variance(sample) <= 0.0 {
        return Err(Error::DegenerateSample("sample has zero variance".into()));
    }
    Ok(())
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn raw_density(sample: &[f64], bandwidth: f64, x: f64) -> f64 {
    let inv_h = 1.0 / bandwidth;
    let sum: f64 = sample
        .iter()
        .map(|&xi| {
            let u = (x - xi) * inv_h;
            (-0.5 * u * u).exp()
        })
        .sum();
    sum * INV_SQRT_2PI * inv_h / sample.len() as f64
}

/// Untruncated Gaussian KDE evaluated at `eval_points`.
pub fn kde_density(sample: &[f64], eval_points: &[f64], rule: BandwidthRule) -> Result<Vec<f64>> {
    let h = rule.bandwidth(sample)?;
    Ok(eval_points.iter().map(|&x| raw_density(sample, h, x)).collect())
}

/// A Gaussian KDE restricted to `[lower, upper]` and renormalized there.
///
/// The normalizing mass is computed in closed form from the normal CDF, so the
/// density integrates to one over the truncation interval up to erfc accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedKde {
    sample: Vec<f64>,
    bandwidth: f64,
    lower: f64,
    upper: f64,
    mass: f64,
}

impl TruncatedKde {
    pub fn new(sample: Vec<f64>, rule: BandwidthRule, lower: f64, upper: f64) -> Result<Self> {
        let bandwidth = rule.bandwidth(&sample)?;
        Self::with_bandwidth(sample, bandwidth, lower, upper)
    }

    pub fn with_bandwidth(sample: Vec<f64>, bandwidth: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Config(format!(
                "truncation bounds must be finite with lower < upper, got [{lower}, {upper}]"
            )));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if sample.is_empty() || sample.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateSample("empirical marginal needs a finite, non-empty sample".into()));
        }
        let mass = sample
            .iter()
            .map(|&xi| normal_cdf((upper - xi) / bandwidth) - normal_cdf((lower - xi) / bandwidth))
            .sum::<f64>()
            / sample.len() as f64;
        if mass <= 1e-300 {
            return Err(Error::DegenerateSample("kernel mass inside truncation bounds is zero".into()));
        }
        Ok(Self {
            sample,
            bandwidth,
            lower,
            upper,
            mass,
        })
    }

    pub fn sample_points(&self) -> &[f64] {
        &self.sample
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        raw_density(&self.sample, self.bandwidth, x) / self.mass
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        let h = self.bandwidth;
        let below = self
            .sample
            .iter()
            .map(|&xi| normal_cdf((x - xi) / h) - normal_cdf((self.lower - xi) / h))
            .sum::<f64>()
            / self.sample.len() as f64;
        (below / self.mass).clamp(0.0, 1.0)
    }

    /// Rejection sampling: pick a kernel centre, jitter, keep if inside the bounds.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let i = rng.random_range(0..self.sample.len());
            let z: f64 = rng.sample(StandardNormal);
            let x = self.sample[i] + self.bandwidth * z;
            if x >= self.lower && x <= self.upper {
                return x;
            }
        }
    }

    /// Grid location of the density maximum.
    pub fn mode(&self, grid_points: usize) -> f64 {
        let grid = stats::linspace(self.lower, self.upper, grid_points.max(2));
        let mut best = (grid[0], f64::NEG_INFINITY);
        for &x in &grid {
            let p = self.pdf(x);
            if p > best.1 {
                best = (x, p);
            }
        }
        best.0
    }
}

#[cfg(test)]
pub(crate) fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::rng_from_seed;
    use crate::prob::stats::{linspace, trapezoid};
    use rand_distr::{Distribution, Normal};

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let s = normal_sample(10_000, 11);
        let d = kde_density(&s, &[0.0], BandwidthRule::Silverman).unwrap();
        // closed-form N(0,1) pdf at 0
        assert!((d[0] - gaussian_pdf(0.0, 0.0, 1.0)).abs() < 0.02, "{}", d[0]);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let err = kde_density(&[2.0; 10], &[0.0], BandwidthRule::Silverman).unwrap_err();
        assert!(matches!(err, Error::DegenerateSample(_)));
    }

    #[test]
    fn symmetric_sample_gives_symmetric_density() {
        let mut s = normal_sample(2_000, 3);
        let mirrored: Vec<f64> = s.iter().map(|x| -x).collect();
        s.extend(mirrored);
        let pts = [0.3, 0.9, 1.7];
        let neg: Vec<f64> = pts.iter().map(|x| -x).collect();
        let a = kde_density(&s, &pts, BandwidthRule::Silverman).unwrap();
        let b = kde_density(&s, &neg, BandwidthRule::Silverman).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 0.02);
        }
    }

    #[test]
    fn untruncated_kde_has_unit_mass() {
        let s = normal_sample(500, 5);
        let grid = linspace(-10.0, 10.0, 4001);
        let d = kde_density(&s, &grid, BandwidthRule::Silverman).unwrap();
        assert!(d.iter().all(|&p| p >= 0.0));
        assert!((trapezoid(&grid, &d) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn truncated_kde_integrates_to_one() {
        let s = normal_sample(300, 9);
        let kde = TruncatedKde::new(s, BandwidthRule::Silverman, -0.5, 1.5).unwrap();
        let grid = linspace(-0.5, 1.5, 20_001);
        let d: Vec<f64> = grid.iter().map(|&x| kde.pdf(x)).collect();
        assert!((trapezoid(&grid, &d) - 1.0).abs() < 1e-6);
        assert!((kde.cdf(1.5) - 1.0).abs() < 1e-12);
        assert_eq!(kde.pdf(2.0), 0.0);
    }

    #[test]
    fn truncated_draws_stay_in_bounds() {
        let kde = TruncatedKde::new(normal_sample(100, 1), BandwidthRule::Silverman, 0.0, 1.0).unwrap();
        let mut rng = rng_from_seed(4);
        for _ in 0..2000 {
            let x = kde.draw(&mut rng);
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn bad_truncation_rejected() {
        assert!(TruncatedKde::with_bandwidth(vec![0.0, 1.0], 0.1, 1.0, 1.0).is_err());
        assert!(TruncatedKde::with_bandwidth(vec![0.0, 1.0], 0.0, 0.0, 1.0).is_err());
        assert!(TruncatedKde::with_bandwidth(vec![0.0, 1.0], 0.1, 0.0, f64::INFINITY).is_err());
    }
}
