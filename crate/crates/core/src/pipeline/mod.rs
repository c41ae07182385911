//! The iterative fusion loop: rank inputs, calibrate the most influential one,
//! keep its posterior if it is informative, repeat; then push the final prior
//! forward to a remaining-useful-life distribution.

pub mod report;
pub mod rul;
pub mod segmented;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use report::write_report;
pub use rul::{rul_cdf, rul_samples, summarize_rul, RulDistribution, RulSummary};
pub use segmented::{segmented_assimilation, SegmentReport};

use crate::error::{Error, Result};
use crate::fusion::FusionProblem;
use crate::hsic::{rank_and_select, HsicReport};
use crate::mcmc::{gelman_rubin, posterior_sample, run_chains, spread_inits, Adaptation, ChainSettings, TARGET_ACCEPTANCE};
use crate::models::data::merged_times;
use crate::models::{evaluate_model_batch, DataGroup, ParisInputs, Simulator, PARIS_NAMES};
use crate::prob::{kl_vs_marginal, sample_dirichlet, sample_prior, stats, BandwidthRule, Marginal, PriorSpec, TruncatedKde};
use crate::surrogate::{build_ensemble, interpolate_outputs, EnsembleOptions};

/// A single simulator call under this many seconds keeps the direct forward model.
pub const DIRECT_COST_LIMIT: f64 = 0.010;

/// Uniform priors of the Paris reference experiment, each +/-10% (1% for Y,
/// 5% for the stresses) around the nominal values.
pub fn paris_prior() -> PriorSpec {
    let bounds = [
        (0.9e-10, 1.1e-10),
        (2.9, 3.1),
        (95.0, 105.0),
        (9.0, 11.0),
        (1.09, 1.11),
        (0.9e-3, 1.1e-3),
    ];
    PriorSpec::new(
        PARIS_NAMES.iter().map(|s| s.to_string()).collect(),
        bounds.iter().map(|&(a, b)| Marginal::Uniform { lower: a, upper: b }).collect(),
    )
    .expect("static prior is valid")
}

/// Nominal input values of the Paris reference experiment.
pub fn paris_nominal() -> Vec<f64> {
    ParisInputs::NOMINAL.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    /// Direct if one simulator call costs less than [`DIRECT_COST_LIMIT`].
    Auto,
    Direct,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub length: usize,
    /// Initial random-walk half-width as a fraction of the support width.
    pub step_fraction: f64,
    pub burn_in: f64,
    pub thin: usize,
    pub r_threshold: f64,
    /// Robbins-Monro step tuning during burn-in.
    pub adapt: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 5,
            length: 10_000,
            step_fraction: crate::mcmc::DEFAULT_STEP_FRACTION,
            burn_in: 0.5,
            thin: 5,
            r_threshold: crate::mcmc::DEFAULT_R_THRESHOLD,
            adapt: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub doe_size: usize,
    pub epsilon: f64,
    pub mcmc: McmcConfig,
    /// Dirichlet weight draws for the ensemble marginalization.
    pub weight_samples: usize,
    pub forward_mode: ForwardMode,
    pub ensemble: EnsembleOptions,
    /// RUL threshold D.
    pub threshold: f64,
    /// Defaults to the input dimension.
    pub max_iterations: Option<usize>,
    /// Variable indices never offered for calibration.
    #[serde(skip)]
    pub exclude: BTreeSet<usize>,
    #[serde(skip)]
    pub seed: u64,
    /// Trajectories drawn from the initial and final priors for the RUL.
    pub rul_sample_size: usize,
    /// Trajectories kept in the exported ensembles.
    pub export_trajectories: usize,
    /// Evaluation points of exported density curves.
    pub kde_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            doe_size: 1000,
            epsilon: 0.1,
            mcmc: McmcConfig::default(),
            weight_samples: 100,
            forward_mode: ForwardMode::Auto,
            ensemble: EnsembleOptions::default(),
            threshold: 0.05,
            max_iterations: None,
            exclude: BTreeSet::new(),
            seed: 0,
            rul_sample_size: 1000,
            export_trajectories: 200,
            kde_points: 200,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.mcmc;
        let checks: [(bool, &str); 12] = [
            (self.doe_size >= 10, "doe_size must be at least 10"),
            (self.doe_size <= crate::hsic::MAX_SAMPLE, "doe_size exceeds the dense HSIC limit of 5000"),
            (self.epsilon >= 0.0 && self.epsilon.is_finite(), "epsilon must be non-negative"),
            (m.chains >= 2, "mcmc.chains must be at least 2"),
            (m.length >= 100, "mcmc.length must be at least 100"),
            (m.step_fraction > 0.0 && m.step_fraction.is_finite(), "mcmc.step_fraction must be positive"),
            ((0.0..1.0).contains(&m.burn_in), "mcmc.burn_in must lie in [0, 1)"),
            (m.thin >= 1, "mcmc.thin must be at least 1"),
            (m.r_threshold > 1.0, "mcmc.r_threshold must exceed 1"),
            (self.weight_samples >= 1, "weight_samples must be at least 1"),
            (self.threshold >= 0.0 && self.threshold.is_finite(), "threshold must be non-negative"),
            (self.rul_sample_size >= 1, "rul_sample_size must be at least 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        if !(self.ensemble.truncation_fraction > 0.0 && self.ensemble.truncation_fraction <= 1.0) {
            return Err(Error::Config("ensemble truncation fraction must lie in (0, 1]".into()));
        }
        if self.ensemble.trends.is_empty() || self.ensemble.kernels.is_empty() {
            return Err(Error::Config("ensemble needs at least one trend and one kernel".into()));
        }
        Ok(())
    }

    /// Seeds of every random stream, derived from the base seed.
    pub fn seeds(&self) -> SeedPlan {
        SeedPlan { base: self.seed }
    }
}

/// Every random stream is `base + offset`, with a per-iteration block of 1000.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub base: u64,
}

impl SeedPlan {
    fn at(&self, iteration: usize, offset: u64) -> u64 {
        self.base.wrapping_add(1000 * iteration as u64 + offset)
    }
    pub fn doe(&self, iteration: usize) -> u64 {
        self.at(iteration, 1)
    }
    pub fn weights(&self, iteration: usize) -> u64 {
        self.at(iteration, 2)
    }
    /// Chain `j` uses this plus `j`.
    pub fn chains(&self, iteration: usize) -> u64 {
        self.at(iteration, 100)
    }
    pub fn prior_trajectories(&self) -> u64 {
        self.base.wrapping_add(7)
    }
    pub fn posterior_trajectories(&self) -> u64 {
        self.base.wrapping_add(8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Doe {
    pub inputs: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub iteration: usize,
    pub prior: PriorSpec,
    pub nominal: Vec<f64>,
    pub history: Vec<IterationReport>,
    pub doe: Option<Doe>,
    pub converged: bool,
}

impl PipelineState {
    /// Nominal values start at the centre of every marginal.
    pub fn new(prior: PriorSpec) -> Self {
        let nominal = prior.marginals().iter().map(Marginal::center).collect();
        Self {
            iteration: 0,
            prior,
            nominal,
            history: Vec::new(),
            doe: None,
            converged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub selected_index: usize,
    pub selected_name: String,
    pub hsic_averaged: Vec<f64>,
    pub forward: ForwardMode,
    pub ensemble_members: Option<usize>,
    pub kl: f64,
    pub updated: bool,
    pub gelman_rubin: f64,
    pub chains_converged: bool,
    pub acceptance_rates: Vec<f64>,
    pub failed_evaluations: usize,
    pub posterior_median: f64,
    pub posterior_mean: f64,
    pub posterior_sd: f64,
    pub support: (f64, f64),
    #[serde(skip)]
    pub posterior_sample: Vec<f64>,
    #[serde(skip)]
    pub hsic: Option<HsicReport>,
}

fn resolve_forward(mode: ForwardMode, model: &dyn Simulator, nominal: &[f64]) -> ForwardMode {
    match mode {
        ForwardMode::Auto => {
            let start = Instant::now();
            let ok = model.simulate(nominal).is_ok();
            let cost = start.elapsed().as_secs_f64();
            if ok && cost < DIRECT_COST_LIMIT {
                ForwardMode::Direct
            } else {
                ForwardMode::Surrogate
            }
        }
        m => m,
    }
}

/// One pass: design of experiments (if the prior changed), sensitivity
/// ranking, calibration of the selected input by MCMC, and the KL gate.
pub fn run_iteration(
    mut state: PipelineState,
    model: &Arc<dyn Simulator>,
    data: &[DataGroup],
    config: &PipelineConfig,
) -> Result<(PipelineState, IterationReport)> {
    let k_iter = state.iteration;
    let seeds = config.seeds();
    let names = state.prior.names().to_vec();

    if state.doe.is_none() {
        let inputs = sample_prior(&state.prior, config.doe_size, seeds.doe(k_iter))?;
        let outputs = evaluate_model_batch(model.as_ref(), &inputs)?;
        state.doe = Some(Doe { inputs, outputs });
    }
    let doe = state.doe.as_ref().expect("design was just built");
    let times = merged_times(data);
    let hsic = rank_and_select(&names, &doe.inputs, &doe.outputs, model.grid(), &times, &config.exclude)?;
    let k = hsic.selected_index;
    let marginal = state.prior.marginal(k).clone();
    if !marginal.is_bounded() {
        return Err(Error::Config(format!("variable {} needs a bounded support to be calibrated", names[k])));
    }
    let support = marginal.support();
    log::info!("iteration {}: calibrating {} on [{}, {}]", k_iter + 1, names[k], support.0, support.1);

    let forward = resolve_forward(config.forward_mode, model.as_ref(), &state.nominal);
    let (problem, members) = match forward {
        ForwardMode::Surrogate => {
            let y = interpolate_outputs(&doe.outputs, model.grid(), &times)?;
            let ensemble = Arc::new(build_ensemble(&doe.inputs, &y, &times, &config.ensemble)?);
            let p = ensemble.len();
            let weights = sample_dirichlet(p, config.weight_samples, seeds.weights(k_iter))?;
            (
                FusionProblem::ensemble(data.to_vec(), ensemble, weights, state.nominal.clone(), k, support)?,
                Some(p),
            )
        }
        _ => (FusionProblem::direct(data.to_vec(), model.clone(), state.nominal.clone(), k, support)?, None),
    };

    let failures = AtomicUsize::new(0);
    let log_post = |theta: f64| match problem.log_posterior(theta) {
        Ok(v) => v,
        Err(e) => {
            if failures.fetch_add(1, Ordering::Relaxed) == 0 {
                log::warn!("forward evaluation failed at {theta}: {e}");
            }
            f64::NEG_INFINITY
        }
    };
    let m = &config.mcmc;
    let width = support.1 - support.0;
    let burn = (m.burn_in * m.length as f64).floor() as usize;
    let settings = ChainSettings {
        length: m.length,
        step_size: m.step_fraction * width,
        adaptation: (m.adapt && burn > 0).then_some(Adaptation {
            iterations: burn,
            target: TARGET_ACCEPTANCE,
        }),
    };
    let inits = spread_inits(support, m.chains);
    let chains = run_chains(&log_post, &inits, support, &vec![settings; m.chains], seeds.chains(k_iter))?;
    let r = match gelman_rubin(&chains, m.burn_in) {
        Ok(rep) => rep.r,
        Err(Error::DegenerateSample(msg)) => {
            log::warn!("Gelman-Rubin undefined: {msg}");
            f64::INFINITY
        }
        Err(e) => return Err(e),
    };
    let chains_converged = r < m.r_threshold;
    if !chains_converged {
        log::warn!("chains for {} did not converge: R = {r}", names[k]);
    }
    let sample = posterior_sample(&chains, m.burn_in, m.thin)?;
    let kl = kl_vs_marginal(&sample, support, &marginal)?;
    let updated = kl >= config.epsilon;
    let median = stats::median(&sample);

    if updated {
        let kde = TruncatedKde::new(sample.clone(), BandwidthRule::Silverman, support.0, support.1)?;
        state.prior = state.prior.with_marginal(k, Marginal::EmpiricalKde(kde))?;
        state.nominal[k] = median;
        state.doe = None;
    } else {
        state.converged = true;
    }
    log::info!("{}: KL = {kl:.4}, R = {r:.4}, {}", names[k], if updated { "prior updated" } else { "converged" });

    let report = IterationReport {
        iteration: k_iter + 1,
        selected_index: k,
        selected_name: names[k].clone(),
        hsic_averaged: hsic.averaged.clone(),
        forward,
        ensemble_members: members,
        kl,
        updated,
        gelman_rubin: r,
        chains_converged,
        acceptance_rates: chains.iter().map(|c| c.acceptance_rate()).collect(),
        failed_evaluations: failures.into_inner(),
        posterior_median: median,
        posterior_mean: stats::mean(&sample),
        posterior_sd: stats::std_dev(&sample),
        support,
        posterior_sample: sample,
        hsic: Some(hsic),
    };
    state.iteration += 1;
    state.history.push(report.clone());
    Ok((state, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The last calibrated variable carried less than epsilon of information.
    Converged,
    CapReached,
    /// Every variable was excluded from selection.
    ExhaustedVariables,
    NoData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalReport {
    pub names: Vec<String>,
    pub initial_prior: PriorSpec,
    pub final_prior: PriorSpec,
    pub nominal: Vec<f64>,
    pub history: Vec<IterationReport>,
    pub termination: Termination,
    pub current_time: f64,
    pub threshold: f64,
    pub grid: crate::models::TimeGrid,
    pub prior_trajectories: DMatrix<f64>,
    pub posterior_trajectories: DMatrix<f64>,
    pub rul_prior: Option<RulDistribution>,
    pub rul_posterior: Option<RulDistribution>,
    pub rul_prior_summary: Option<RulSummary>,
    pub rul_posterior_summary: Option<RulSummary>,
    pub seeds: SeedPlan,
}

impl FinalReport {
    /// Largest KL recorded for each variable; 0 when it was never calibrated.
    pub fn kl_by_variable(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = self.names.iter().map(|n| (n.clone(), 0.0)).collect();
        for h in &self.history {
            let e = out.entry(h.selected_name.clone()).or_insert(0.0);
            *e = e.max(h.kl);
        }
        out
    }

    pub fn chains_converged(&self) -> bool {
        self.history.iter().all(|h| h.chains_converged)
    }

    /// Latest posterior sample of every calibrated variable.
    pub fn latest_posteriors(&self) -> BTreeMap<String, (&[f64], (f64, f64))> {
        let mut out = BTreeMap::new();
        for h in &self.history {
            out.insert(h.selected_name.clone(), (h.posterior_sample.as_slice(), h.support));
        }
        out
    }
}

/// Iterates until the gate closes, the iteration cap is hit, or no variable
/// is left; then samples trajectories from the initial and final priors.
pub fn run_full_pipeline(
    model: Arc<dyn Simulator>,
    prior: PriorSpec,
    data: &[DataGroup],
    config: &PipelineConfig,
) -> Result<FinalReport> {
    config.validate()?;
    if prior.dim() != model.dim() {
        return Err(Error::Shape(format!("prior has {} variables, model takes {}", prior.dim(), model.dim())));
    }
    let cap = config.max_iterations.unwrap_or(prior.dim());
    let mut state = PipelineState::new(prior.clone());
    let termination = if data.is_empty() {
        log::warn!("no data groups: the prior is returned unchanged");
        Termination::NoData
    } else {
        loop {
            if state.iteration >= cap {
                break Termination::CapReached;
            }
            match run_iteration(state.clone(), &model, data, config) {
                Ok((next, _)) => {
                    state = next;
                    if state.converged {
                        break Termination::Converged;
                    }
                }
                Err(Error::ExhaustedVariables) => break Termination::ExhaustedVariables,
                Err(e) => return Err(e),
            }
        }
    };

    let grid = model.grid().clone();
    let current_time = data
        .iter()
        .flat_map(|g| g.times.last().copied())
        .fold(grid.start(), f64::max);
    let seeds = config.seeds();
    let prior_x = sample_prior(&prior, config.rul_sample_size, seeds.prior_trajectories())?;
    let post_x = sample_prior(&state.prior, config.rul_sample_size, seeds.posterior_trajectories())?;
    let prior_y = evaluate_model_batch(model.as_ref(), &prior_x)?;
    let post_y = evaluate_model_batch(model.as_ref(), &post_x)?;
    let (rul_prior, rul_posterior, rul_prior_summary, rul_posterior_summary) = if data.is_empty() {
        (None, None, None, None)
    } else {
        (
            Some(rul_cdf(&prior_y, &grid, config.threshold, current_time)?),
            Some(rul_cdf(&post_y, &grid, config.threshold, current_time)?),
            Some(summarize_rul(&prior_y, &grid, config.threshold, current_time)?),
            Some(summarize_rul(&post_y, &grid, config.threshold, current_time)?),
        )
    };
    Ok(FinalReport {
        names: prior.names().to_vec(),
        initial_prior: prior,
        final_prior: state.prior,
        nominal: state.nominal,
        history: state.history,
        termination,
        current_time,
        threshold: config.threshold,
        grid,
        prior_trajectories: prior_y,
        posterior_trajectories: post_y,
        rul_prior,
        rul_posterior,
        rul_prior_summary,
        rul_posterior_summary,
        seeds,
    })
}
