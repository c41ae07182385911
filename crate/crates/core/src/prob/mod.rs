//! Distributions, seeded sampling, kernel density estimation and KL information gain.

pub mod kde;
pub mod kl;
pub mod marginal;
pub mod stats;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kde::{kde_density, BandwidthRule, TruncatedKde};
pub use kl::{kl_vs_marginal, kl_vs_uniform};
pub use marginal::{sample_prior, Marginal, PriorSpec};

use crate::error::{Error, Result};

/// Every random stream in the crate goes through this, so a seed pins the output.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Config("simplex weights need at least one component".into()));
        }
        if w.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Domain("simplex weights must lie in [0, 1]".into()));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("simplex weights sum to {total}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn one_hot(p: usize, j: usize) -> Self {
        let mut w = vec![0.0; p];
        w[j] = 1.0;
        Self(w)
    }

    pub fn uniform(p: usize) -> Self {
        Self(vec![1.0 / p as f64; p])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `count` draws from the flat Dirichlet on the `p - 1` simplex, one per row.
///
/// Normalized unit-exponential spacings; for `p == 1` every row is exactly `[1.0]`.
pub fn sample_dirichlet(p: usize, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    if p == 0 || count == 0 {
        return Err(Error::Config(format!(
            "dirichlet sampling needs p >= 1 and M >= 1, got p = {p}, M = {count}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = DMatrix::zeros(count, p);
    for i in 0..count {
        if p == 1 {
            out[(i, 0)] = 1.0;
            continue;
        }
        let e: Vec<f64> = (0..p).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = e.iter().sum();
        let mut acc = 0.0;
        for j in 0..p - 1 {
            let w = e[j] / total;
            out[(i, j)] = w;
            acc += w;
        }
        // close the row exactly so it sums to one up to a single rounding
        out[(i, p - 1)] = (1.0 - acc).max(0.0);
    }
    Ok(out)
}

/// Rows of a weight matrix as validated simplex points.
pub fn weight_rows(m: &DMatrix<f64>) -> Vec<SimplexWeights> {
    m.row_iter()
        .map(|r| SimplexWeights(r.iter().copied().collect()))
        .collect()
}
