use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::kde::TruncatedKde;
use super::rng_from_seed;
use crate::error::{Error, Result};

/// One independent input marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { lower: f64, upper: f64 },
    Gaussian { mean: f64, variance: f64 },
    /// Shape `alpha`, rate `beta`.
    Gamma { shape: f64, rate: f64 },
    EmpiricalKde(TruncatedKde),
}

impl Marginal {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        let m = Marginal::Uniform { lower, upper };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::Config(format!(
                        "uniform marginal needs finite lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
            Marginal::Gaussian { mean, variance } => {
                if !(mean.is_finite() && variance > 0.0 && variance.is_finite()) {
                    return Err(Error::Config(format!(
                        "gaussian marginal needs finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
            }
            Marginal::Gamma { shape, rate } => {
                if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                    return Err(Error::Config(format!(
                        "gamma marginal needs positive shape and rate, got ({shape}, {rate})"
                    )));
                }
            }
            // Invariants are enforced by its constructor.
            Marginal::EmpiricalKde(_) => {}
        }
        Ok(())
    }

    /// Closed support interval; unbounded ends are infinite.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Marginal::Uniform { lower, upper } => (*lower, *upper),
            Marginal::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Marginal::Gamma { .. } => (0.0, f64::INFINITY),
            Marginal::EmpiricalKde(k) => k.bounds(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        let (a, b) = self.support();
        a.is_finite() && b.is_finite()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Uniform { lower, upper } => {
                if x >= *lower && x <= *upper {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
            Marginal::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let u = (x - mean) / sd;
                (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            Marginal::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let ln = shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - statrs::function::gamma::ln_gamma(*shape);
                ln.exp()
            }
            Marginal::EmpiricalKde(k) => k.pdf(x),
        }
    }

    /// A representative central value: midpoint of bounded supports, mean otherwise.
    pub fn center(&self) -> f64 {
        match self {
            Marginal::Uniform { lower, upper } => 0.5 * (lower + upper),
            Marginal::Gaussian { mean, .. } => *mean,
            Marginal::Gamma { shape, rate } => shape / rate,
            Marginal::EmpiricalKde(k) => {
                let (a, b) = k.bounds();
                0.5 * (a + b)
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            Marginal::Gaussian { mean, variance } => Normal::new(*mean, variance.sqrt())
                .expect("validated gaussian")
                .sample(rng),
            Marginal::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate)
                .expect("validated gamma")
                .sample(rng),
            Marginal::EmpiricalKde(k) => k.draw(rng),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Marginal::Uniform { .. } => "uniform",
            Marginal::Gaussian { .. } => "gaussian",
            Marginal::Gamma { .. } => "gamma",
            Marginal::EmpiricalKde(_) => "empirical_kde",
        }
    }
}

/// Product of independent marginals, one per named input variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    names: Vec<String>,
    marginals: Vec<Marginal>,
}

impl PriorSpec {
    pub fn new(names: Vec<String>, marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::Config("prior needs at least one marginal".into()));
        }
        if names.len() != marginals.len() {
            return Err(Error::Config(format!(
                "{} names for {} marginals",
                names.len(),
                marginals.len()
            )));
        }
        for (name, m) in names.iter().zip(&marginals) {
            m.validate().map_err(|e| Error::Config(format!("variable {name}: {e}")))?;
        }
        Ok(Self { names, marginals })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn marginal(&self, j: usize) -> &Marginal {
        &self.marginals[j]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Copy with marginal `j` replaced.
    pub fn with_marginal(&self, j: usize, marginal: Marginal) -> Result<Self> {
        marginal.validate()?;
        let mut out = self.clone();
        out.marginals[j] = marginal;
        Ok(out)
    }

    /// Joint density as the product of the marginal densities.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.marginals.iter().zip(x).map(|(m, &v)| m.pdf(v)).product()
    }
}

/// Draw `n` independent rows from the prior. Row-major draw order, so the
/// matrix is a pure function of `(prior, n, seed)`.
pub fn sample_prior(prior: &PriorSpec, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    for m in prior.marginals() {
        m.validate()?;
    }
    let d = prior.dim();
    let mut rng = rng_from_seed(seed);
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        for (j, m) in prior.marginals().iter().enumerate() {
            out[(i, j)] = m.draw(&mut rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::kde::BandwidthRule;
    use crate::prob::stats::{linspace, trapezoid};

    fn unit_square() -> PriorSpec {
        PriorSpec::new(
            vec!["a".into(), "b".into()],
            vec![Marginal::uniform(0.0, 1.0).unwrap(), Marginal::uniform(0.0, 1.0).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn uniform_draws_stay_in_support() {
        let x = sample_prior(&unit_square(), 4, 17).unwrap();
        assert_eq!(x.shape(), (4, 2));
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn degenerate_uniform_rejected() {
        assert!(matches!(Marginal::uniform(2.0, 2.0), Err(Error::Config(_))));
        let bad = PriorSpec::new(vec!["c".into()], vec![Marginal::Uniform { lower: 1.0, upper: 1.0 }]);
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Marginal::Gaussian { mean: 0.0, variance: 0.0 }.validate().is_err());
        assert!(Marginal::Gamma { shape: -1.0, rate: 1.0 }.validate().is_err());
        assert!(Marginal::Gamma { shape: 1.0, rate: 0.0 }.validate().is_err());
        assert!(PriorSpec::new(vec![], vec![]).is_err());
    }

    #[test]
    fn same_seed_same_matrix() {
        let p = unit_square();
        let a = sample_prior(&p, 50, 3).unwrap();
        let b = sample_prior(&p, 50, 3).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = sample_prior(&p, 50, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gamma_density_normalizes() {
        let g = Marginal::Gamma { shape: 2.5, rate: 1.5 };
        let xs = linspace(1e-9, 40.0, 200_001);
        let ys: Vec<f64> = xs.iter().map(|&x| g.pdf(x)).collect();
        assert!((trapezoid(&xs, &ys) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn mixed_prior_samples() {
        let kde = TruncatedKde::new(vec![0.2, 0.25, 0.3, 0.5], BandwidthRule::Silverman, 0.0, 1.0).unwrap();
        let p = PriorSpec::new(
            vec!["g".into(), "k".into(), "n".into()],
            vec![
                Marginal::Gamma { shape: 2.0, rate: 1.0 },
                Marginal::EmpiricalKde(kde),
                Marginal::Gaussian { mean: 1.0, variance: 4.0 },
            ],
        )
        .unwrap();
        let x = sample_prior(&p, 200, 1).unwrap();
        assert!(x.column(0).iter().all(|&v| v > 0.0));
        assert!(x.column(1).iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
