//! TOML run configuration shared by the command-line tool and the C interface.
//!
//! ```toml
//! seed = 42
//! exclude = []              # variables never offered for calibration
//!
//! [model]
//! kind = "paris"        # or "reset"
//! step = 100.0
//! horizon = 121000.0
//! cap = 0.1
//!
//! [[prior]]
//! name = "C"
//! distribution = "uniform"   # uniform (lower, upper) | gaussian (mean, variance) | gamma (shape, rate)
//! lower = 0.9e-10
//! upper = 1.1e-10
//! nominal = 1e-10            # optional, defaults to the marginal centre
//!
//! [data]
//! files = ["groups.csv"]     # relative to the config file
//!
//! [pipeline]
//! doe_size = 1000
//! epsilon = 0.1
//!
//! [pipeline.mcmc]
//! chains = 5
//! length = 10000
//! ```
//!
//! See `configs/paris.toml` for every key with its default.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::data::default_group_specs;
use crate::models::{
    generate_data_groups, load_data_csv, DataGroup, FixedSegmentLaws, GroupSpec, ParisModel, PiecewiseResetModel,
    SegmentLaw, Simulator, TimeGrid,
};
use crate::pipeline::PipelineConfig;
use crate::prob::{Marginal, PriorSpec};

/// Synthetic data are drawn from this offset of the base seed.
pub const DATA_SEED_OFFSET: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Variable names never offered for calibration.
    #[serde(default)]
    pub exclude: Vec<String>,
    pub model: ModelConfig,
    pub prior: Vec<PriorEntry>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// Directory that relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Paris {
        #[serde(default = "paris_step")]
        step: f64,
        #[serde(default = "paris_horizon")]
        horizon: f64,
        #[serde(default = "paris_cap")]
        cap: Option<f64>,
        /// Largest crack increment per step before the run is declared divergent.
        #[serde(default = "paris_growth_limit")]
        growth_limit: f64,
    },
    Reset {
        #[serde(default)]
        start: f64,
        step: f64,
        horizon: f64,
        reset_times: Vec<f64>,
        reset_factor: f64,
        /// Calibrate each segment independently in `pipeline`.
        #[serde(default = "yes")]
        segmented: bool,
    },
}

fn paris_step() -> f64 {
    100.0
}
fn paris_horizon() -> f64 {
    121_000.0
}
fn paris_cap() -> Option<f64> {
    Some(0.1)
}
fn paris_growth_limit() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    pub name: String,
    pub distribution: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub shape: Option<f64>,
    pub rate: Option<f64>,
    pub nominal: Option<f64>,
}

impl PriorEntry {
    fn need(&self, v: Option<f64>, key: &str) -> Result<f64> {
        v.ok_or_else(|| Error::Config(format!("prior {}: {} needs `{key}`", self.name, self.distribution)))
    }

    pub fn marginal(&self) -> Result<Marginal> {
        let (allowed, m): (&[&str], Marginal) = match self.distribution.as_str() {
            "uniform" => (
                &["lower", "upper"],
                Marginal::Uniform {
                    lower: self.need(self.lower, "lower")?,
                    upper: self.need(self.upper, "upper")?,
                },
            ),
            "gaussian" => (
                &["mean", "variance"],
                Marginal::Gaussian {
                    mean: self.need(self.mean, "mean")?,
                    variance: self.need(self.variance, "variance")?,
                },
            ),
            "gamma" => (
                &["shape", "rate"],
                Marginal::Gamma {
                    shape: self.need(self.shape, "shape")?,
                    rate: self.need(self.rate, "rate")?,
                },
            ),
            other => {
                return Err(Error::Config(format!(
                    "prior {}: unknown distribution `{other}` (uniform, gaussian, gamma)",
                    self.name
                )))
            }
        };
        let present = [
            ("lower", self.lower),
            ("upper", self.upper),
            ("mean", self.mean),
            ("variance", self.variance),
            ("shape", self.shape),
            ("rate", self.rate),
        ];
        if let Some((k, _)) = present.iter().find(|(k, v)| v.is_some() && !allowed.contains(k)) {
            return Err(Error::Config(format!(
                "prior {}: `{k}` does not apply to a {} marginal",
                self.name, self.distribution
            )));
        }
        m.validate().map_err(|e| Error::Config(format!("prior {}: {e}", self.name)))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `group_id,time,value` files; groups from all files are pooled.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    pub synthetic: Option<SyntheticData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub start: f64,
    pub end: f64,
    /// Scale of the default four-group design: noise levels of 1 to 4 units.
    #[serde(default = "default_unit")]
    pub unit: f64,
    /// Explicit groups instead of the default design.
    pub groups: Option<Vec<SyntheticGroup>>,
    /// Data-generating inputs; defaults to the prior nominals.
    pub truth: Option<Vec<f64>>,
    /// Reset model only: one gain per segment, overriding `truth[0]`.
    pub segment_gains: Option<Vec<f64>>,
}

fn default_unit() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGroup {
    pub count: usize,
    pub noise_sd: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.base_dir = base_dir.into();
        c.validate()?;
        Ok(c)
    }

    /// Reads and validates `path`; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, dir).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let prior = self.prior_spec()?;
        let model = self.simulator()?;
        if prior.dim() != model.dim() {
            return Err(Error::Config(format!(
                "{} prior entries for a model with {} inputs",
                prior.dim(),
                model.dim()
            )));
        }
        for name in &self.exclude {
            if prior.index_of(name).is_none() {
                return Err(Error::Config(format!("excluded variable `{name}` is not in the prior")));
            }
        }
        for f in &self.data.files {
            let p = self.base_dir.join(f);
            if !p.is_file() {
                return Err(Error::Config(format!("data file {} does not exist", p.display())));
            }
        }
        if let Some(s) = &self.data.synthetic {
            if !(s.end > s.start) {
                return Err(Error::Config("synthetic data needs end > start".into()));
            }
            if let Some(t) = &s.truth {
                if t.len() != prior.dim() {
                    return Err(Error::Config(format!("truth has {} values, prior has {}", t.len(), prior.dim())));
                }
            }
            if s.segment_gains.is_some() && !matches!(self.model, ModelConfig::Reset { .. }) {
                return Err(Error::Config("segment_gains applies to the reset model only".into()));
            }
        }
        self.pipeline_config().validate()
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        let names = self.prior.iter().map(|p| p.name.clone()).collect();
        let marginals = self.prior.iter().map(PriorEntry::marginal).collect::<Result<Vec<_>>>()?;
        PriorSpec::new(names, marginals)
    }

    /// Configured nominal values, falling back to each marginal's centre.
    pub fn nominal(&self) -> Result<Vec<f64>> {
        self.prior
            .iter()
            .map(|p| Ok(p.nominal.unwrap_or(p.marginal()?.center())))
            .collect()
    }

    pub fn reset_model(&self) -> Result<Option<PiecewiseResetModel>> {
        match &self.model {
            ModelConfig::Reset {
                start,
                step,
                horizon,
                reset_times,
                reset_factor,
                ..
            } => Ok(Some(PiecewiseResetModel::new(
                TimeGrid::regular(*start, *step, *horizon)?,
                reset_times.clone(),
                *reset_factor,
            )?)),
            ModelConfig::Paris { .. } => Ok(None),
        }
    }

    pub fn segmented(&self) -> bool {
        matches!(self.model, ModelConfig::Reset { segmented: true, .. })
    }

    pub fn simulator(&self) -> Result<Arc<dyn Simulator>> {
        match &self.model {
            ModelConfig::Paris {
                step,
                horizon,
                cap,
                growth_limit,
            } => Ok(Arc::new(ParisModel::new(TimeGrid::regular(0.0, *step, *horizon)?, *cap, *growth_limit)?)),
            ModelConfig::Reset { .. } => Ok(Arc::new(self.reset_model()?.expect("reset model"))),
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut c = self.pipeline.clone();
        c.seed = self.seed;
        let names: Vec<&str> = self.prior.iter().map(|p| p.name.as_str()).collect();
        c.exclude = self
            .exclude
            .iter()
            .filter_map(|n| names.iter().position(|m| *m == n.as_str()))
            .collect();
        c
    }

    /// Data files are read in order; synthetic groups are appended after them.
    pub fn load_data(&self) -> Result<Vec<DataGroup>> {
        let mut groups = Vec::new();
        for f in &self.data.files {
            groups.extend(load_data_csv(&self.base_dir.join(f))?);
        }
        if let Some(s) = &self.data.synthetic {
            groups.extend(self.synthetic_groups(s)?);
        }
        Ok(groups)
    }

    fn synthetic_groups(&self, s: &SyntheticData) -> Result<Vec<DataGroup>> {
        let specs = match &s.groups {
            Some(g) => g.iter().map(|g| GroupSpec::evenly(s.start, s.end, g.count, g.noise_sd)).collect(),
            None => default_group_specs(s.start, s.end, s.unit),
        };
        let truth = match &s.truth {
            Some(t) => t.clone(),
            None => self.nominal()?,
        };
        let seed = self.seed.wrapping_add(DATA_SEED_OFFSET);
        match (&s.segment_gains, self.reset_model()?) {
            (Some(gains), Some(model)) => {
                if gains.len() != model.segment_count() {
                    return Err(Error::Config(format!(
                        "{} segment gains for {} segments",
                        gains.len(),
                        model.segment_count()
                    )));
                }
                let laws = gains
                    .iter()
                    .map(|&gain| SegmentLaw { gain, curvature: truth[1] })
                    .collect();
                generate_data_groups(&FixedSegmentLaws::new(model, laws)?, &truth[2..3], &specs, seed)
            }
            _ => generate_data_groups(self.simulator()?.as_ref(), &truth, &specs, seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARIS: &str = r#"
        seed = 3
        exclude = ["Y"]
        [model]
        kind = "paris"
        [[prior]]
        name = "C"
        distribution = "uniform"
        lower = 0.9e-10
        upper = 1.1e-10
        [[prior]]
        name = "m"
        distribution = "uniform"
        lower = 2.9
        upper = 3.1
        [[prior]]
        name = "sigma_max"
        distribution = "uniform"
        lower = 95.0
        upper = 105.0
        [[prior]]
        name = "sigma_min"
        distribution = "uniform"
        lower = 9.0
        upper = 11.0
        [[prior]]
        name = "Y"
        distribution = "uniform"
        lower = 1.09
        upper = 1.11
        [[prior]]
        name = "a0"
        distribution = "uniform"
        lower = 0.9e-3
        upper = 1.1e-3
        [data.synthetic]
        start = 5000.0
        end = 80000.0
        [pipeline]
        doe_size = 300
        [pipeline.mcmc]
        length = 2000
    "#;

    #[test]
    fn parses_and_applies_defaults() {
        let c = RunConfig::from_toml(PARIS, ".").unwrap();
        let p = c.pipeline_config();
        assert_eq!(p.doe_size, 300);
        assert_eq!(p.epsilon, 0.1);
        assert_eq!(p.mcmc.length, 2000);
        assert_eq!(p.mcmc.chains, 5);
        assert_eq!(p.seed, 3);
        assert_eq!(p.exclude.iter().copied().collect::<Vec<_>>(), vec![4]);
        assert_eq!(c.prior_spec().unwrap(), crate::pipeline::paris_prior());
        let data = c.load_data().unwrap();
        assert_eq!(data.iter().map(DataGroup::len).collect::<Vec<_>>(), vec![8, 10, 12, 15]);
    }

    #[test]
    fn schema_errors_are_config_errors() {
        let unknown = PARIS.replace("doe_size = 300", "doe_sise = 300");
        let e = RunConfig::from_toml(&unknown, ".").unwrap_err();
        assert!(matches!(e, Error::Config(ref m) if m.contains("doe_sise")), "{e}");
        let wrong_key = PARIS.replace("lower = 2.9", "mean = 2.9");
        assert!(RunConfig::from_toml(&wrong_key, ".").is_err());
        let bad_range = PARIS.replace("[pipeline.mcmc]", "[pipeline.mcmc]\nburn_in = 1.5");
        assert!(RunConfig::from_toml(&bad_range, ".").is_err());
        let missing = PARIS.replace("[data.synthetic]", "[data]\nfiles = [\"nope.csv\"]\n[data.synthetic]");
        assert!(matches!(RunConfig::from_toml(&missing, "."), Err(Error::Config(_))));
        let short = PARIS.replace("name = \"a0\"", "name = \"a0\"\nnominal = 1.0").replacen("[[prior]]", "", 1);
        assert!(RunConfig::from_toml(&short, ".").is_err());
    }

    #[test]
    fn reset_model_with_segment_gains() {
        let text = r#"
            [model]
            kind = "reset"
            step = 1.0
            horizon = 40.0
            reset_times = [10.0, 20.0, 30.0]
            reset_factor = 0.5
            [[prior]]
            name = "gain"
            distribution = "uniform"
            lower = 0.1
            upper = 2.0
            [[prior]]
            name = "curvature"
            distribution = "uniform"
            lower = 0.0
            upper = 0.1
            [[prior]]
            name = "start_level"
            distribution = "uniform"
            lower = 0.0
            upper = 20.0
            [data.synthetic]
            start = 0.0
            end = 40.0
            truth = [1.0, 0.05, 2.0]
            segment_gains = [1.6, 1.2, 0.8, 0.4]
            groups = [{ count = 41, noise_sd = 0.01 }]
        "#;
        let c = RunConfig::from_toml(text, ".").unwrap();
        assert!(c.segmented());
        let g = &c.load_data().unwrap()[0];
        // first segment: 2 + 1.6 (t + 0.025 t^2) at t = 5
        let i = g.times.iter().position(|&t| (t - 5.0).abs() < 1e-9).unwrap();
        assert!((g.values[i] - (2.0 + 1.6 * (5.0 + 0.025 * 25.0))).abs() < 0.05);
    }
}
