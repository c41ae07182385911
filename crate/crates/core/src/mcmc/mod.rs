//! Random-walk Metropolis-Hastings on a bounded interval, multi-chain runs and
//! the Gelman-Rubin diagnostic.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{rng_from_seed, stats};

pub const DEFAULT_STEP_FRACTION: f64 = 0.1;
pub const TARGET_ACCEPTANCE: f64 = 0.35;
pub const DEFAULT_R_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub states: Vec<f64>,
    pub log_posts: Vec<f64>,
    pub accepted: Vec<bool>,
    pub accepted_count: usize,
    /// Step size in effect after adaptation (equal to the initial one without it).
    pub step_size: f64,
    pub seed: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted_count as f64 / self.states.len() as f64
    }
}

/// Robbins-Monro tuning of the step toward a target acceptance rate, applied
/// only during the first `iterations` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub iterations: usize,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub length: usize,
    pub step_size: f64,
    pub adaptation: Option<Adaptation>,
}

/// One chain of `settings.length` steps from `init`. Proposals
/// `theta + U(-step, step)` outside `support` are rejected, as are proposals
/// with a non-finite or `+inf` (exact-fit) log-posterior.
pub fn rwmh_chain<F>(log_post: &F, init: f64, support: (f64, f64), settings: &ChainSettings, seed: u64) -> Result<Chain>
where
    F: Fn(f64) -> f64 + ?Sized,
{
    let (lo, hi) = support;
    let l = settings.length;
    if l < 100 {
        return Err(Error::Config(format!("chain length must be at least 100, got {l}")));
    }
    if !(settings.step_size > 0.0 && settings.step_size.is_finite()) {
        return Err(Error::Config(format!("step size must be positive, got {}", settings.step_size)));
    }
    if !(init >= lo && init <= hi) {
        return Err(Error::Initialization(format!("initial state {init} is outside [{lo}, {hi}]")));
    }
    let mut current = log_post(init);
    if !current.is_finite() {
        return Err(Error::Initialization(format!("log-posterior at {init} is {current}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut theta = init;
    let mut step = settings.step_size;
    let width = hi - lo;
    let mut chain = Chain {
        states: Vec::with_capacity(l),
        log_posts: Vec::with_capacity(l),
        accepted: Vec::with_capacity(l),
        accepted_count: 0,
        step_size: step,
        seed,
    };
    let mut warned = false;
    for i in 0..l {
        let proposal = theta + step * (2.0 * rng.random::<f64>() - 1.0);
        let u: f64 = rng.random();
        let mut accept = false;
        if proposal >= lo && proposal <= hi {
            let lp = log_post(proposal);
            if lp == f64::INFINITY {
                if !warned {
                    log::warn!("exact-fit proposal at {proposal} rejected");
                    warned = true;
                }
            } else if lp.is_finite() && (lp >= current || u < (lp - current).exp()) {
                accept = true;
                theta = proposal;
                current = lp;
            }
        }
        if let Some(a) = settings.adaptation {
            if i < a.iterations {
                let gain = 1.0 / ((i + 1) as f64).powf(0.6);
                let hit = if accept { 1.0 } else { 0.0 };
                step = (step * (gain * (hit - a.target)).exp()).clamp(1e-9 * width, 10.0 * width);
            }
        }
        chain.states.push(theta);
        chain.log_posts.push(current);
        chain.accepted.push(accept);
        chain.accepted_count += usize::from(accept);
    }
    chain.step_size = step;
    Ok(chain)
}

/// `J` evenly spread initial states strictly inside the support.
pub fn spread_inits(support: (f64, f64), j: usize) -> Vec<f64> {
    (0..j)
        .map(|i| support.0 + (support.1 - support.0) * (i as f64 + 0.5) / j as f64)
        .collect()
}

/// `inits.len()` independent chains with seeds `base_seed + j`, run concurrently.
pub fn run_chains<F>(
    log_post: &F,
    inits: &[f64],
    support: (f64, f64),
    settings: &[ChainSettings],
    base_seed: u64,
) -> Result<Vec<Chain>>
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    if inits.len() < 2 {
        return Err(Error::Config(format!("need at least 2 chains, got {}", inits.len())));
    }
    if settings.len() != inits.len() {
        return Err(Error::Shape(format!("{} settings for {} chains", settings.len(), inits.len())));
    }
    inits
        .par_iter()
        .zip(settings)
        .enumerate()
        .map(|(j, (&init, s))| {
            rwmh_chain(log_post, init, support, s, base_seed.wrapping_add(j as u64))
                .map_err(|e| Error::Chain { chain: j, source: Box::new(e) })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub r: f64,
    pub per_chain_means: Vec<f64>,
    pub b: f64,
    pub w: f64,
    pub retained_length: usize,
}

fn burn_start(len: usize, burn_in_fraction: f64) -> usize {
    (burn_in_fraction.clamp(0.0, 1.0) * len as f64).floor() as usize
}

/// `B = L'/(J-1) sum (mean_j - mean)^2`, `W` the mean within-chain variance,
/// `R = ((1 - 1/L') W + B / L') / W` on the post-burn-in part of each chain.
pub fn gelman_rubin(chains: &[Chain], burn_in_fraction: f64) -> Result<ConvergenceReport> {
    let j = chains.len();
    if j < 2 {
        return Err(Error::Config(format!("Gelman-Rubin needs at least 2 chains, got {j}")));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("chains have different lengths".into()));
    }
    let start = burn_start(len, burn_in_fraction);
    let lp = len - start;
    if lp < 10 {
        return Err(Error::Config(format!("only {lp} post-burn-in states, need at least 10")));
    }
    let kept: Vec<&[f64]> = chains.iter().map(|c| &c.states[start..]).collect();
    let means: Vec<f64> = kept.iter().map(|s| stats::mean(s)).collect();
    let grand = stats::mean(&means);
    let lf = lp as f64;
    let b = lf / (j - 1) as f64 * means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>();
    let w = kept.iter().map(|s| stats::variance(s)).sum::<f64>() / j as f64;
    if !(w > 0.0) {
        return Err(Error::DegenerateSample("within-chain variance is zero".into()));
    }
    let r = ((1.0 - 1.0 / lf) * w + b / lf) / w;
    Ok(ConvergenceReport {
        r,
        per_chain_means: means,
        b,
        w,
        retained_length: lp,
    })
}

/// Post-burn-in states of every chain, every `thin`-th one, chain by chain.
pub fn posterior_sample(chains: &[Chain], burn_in_fraction: f64, thin: usize) -> Result<Vec<f64>> {
    if thin == 0 {
        return Err(Error::Config("thinning interval must be at least 1".into()));
    }
    let out: Vec<f64> = chains
        .iter()
        .flat_map(|c| c.states[burn_start(c.len(), burn_in_fraction)..].iter().step_by(thin).copied())
        .collect();
    if out.is_empty() {
        return Err(Error::Config("posterior sample is empty after burn-in and thinning".into()));
    }
    Ok(out)
}

/// `chain_id,iteration,state,log_post,accepted`.
pub fn trace_csv(chains: &[Chain]) -> String {
    let mut s = String::from("chain_id,iteration,state,log_post,accepted\n");
    for (j, c) in chains.iter().enumerate() {
        for i in 0..c.len() {
            s.push_str(&format!(
                "{j},{i},{},{},{}\n",
                c.states[i],
                c.log_posts[i],
                u8::from(c.accepted[i])
            ));
        }
    }
    s
}

pub fn write_trace_csv(chains: &[Chain], path: &Path) -> Result<()> {
    std::fs::write(path, trace_csv(chains)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(step: f64, length: usize) -> ChainSettings {
        ChainSettings {
            length,
            step_size: step,
            adaptation: None,
        }
    }

    #[test]
    fn flat_target_accepts_everything_inside() {
        let c = rwmh_chain(&|_| 0.0, 0.5, (0.0, 1.0), &settings(0.05, 5000), 1).unwrap();
        assert!(c.acceptance_rate() >= 0.95, "{}", c.acceptance_rate());
        assert!(c.states.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn over_wide_steps_have_low_acceptance() {
        let f = |x: f64| -0.5 * ((x - 0.5) / 0.05).powi(2);
        let c = rwmh_chain(&f, 0.5, (0.0, 1.0), &settings(10.0, 5000), 2).unwrap();
        assert!(c.acceptance_rate() < 0.2);
    }

    #[test]
    fn initialization_errors() {
        let f = |x: f64| if x < 0.5 { f64::NEG_INFINITY } else { 0.0 };
        assert!(matches!(rwmh_chain(&f, 0.2, (0.0, 1.0), &settings(0.1, 200), 0), Err(Error::Initialization(_))));
        assert!(matches!(rwmh_chain(&f, 2.0, (0.0, 1.0), &settings(0.1, 200), 0), Err(Error::Initialization(_))));
        let err = run_chains(&f, &[0.7, 0.1], (0.0, 1.0), &[settings(0.1, 200); 2], 0).unwrap_err();
        assert!(matches!(err, Error::Chain { chain: 1, .. }));
    }

    #[test]
    fn chains_are_reproducible_and_seed_isolated() {
        let f = |x: f64| -(x - 0.3).powi(2) * 20.0;
        let s = [settings(0.1, 1000); 3];
        let par = run_chains(&f, &[0.1, 0.5, 0.9], (0.0, 1.0), &s, 40).unwrap();
        let seq: Vec<Chain> = [0.1, 0.5, 0.9]
            .iter()
            .enumerate()
            .map(|(j, &i)| rwmh_chain(&f, i, (0.0, 1.0), &s[0], 40 + j as u64).unwrap())
            .collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn identical_chains_give_exact_ratio() {
        let f = |x: f64| -(x - 0.3).powi(2) * 50.0;
        let c = rwmh_chain(&f, 0.4, (0.0, 1.0), &settings(0.2, 2000), 3).unwrap();
        let rep = gelman_rubin(&[c.clone(), c.clone(), c], 0.5).unwrap();
        assert_eq!(rep.b, 0.0);
        assert!((rep.r - (1.0 - 1.0 / 1000.0)).abs() < 1e-12);
    }

    #[test]
    fn separated_chains_are_flagged() {
        let mk = |level: f64| Chain {
            states: (0..200).map(|i| level + 1e-3 * ((i * 37 % 11) as f64)).collect(),
            log_posts: vec![0.0; 200],
            accepted: vec![true; 200],
            accepted_count: 200,
            step_size: 0.1,
            seed: 0,
        };
        let rep = gelman_rubin(&[mk(0.0), mk(1.0)], 0.5).unwrap();
        assert!(rep.r > 1.1);
        let flat = Chain { states: vec![1.0; 200], ..mk(0.0) };
        assert!(matches!(gelman_rubin(&[flat.clone(), flat], 0.5), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn pooling_and_thinning() {
        let f = |_: f64| 0.0;
        let chains = run_chains(&f, &[0.2, 0.8], (0.0, 1.0), &[settings(0.1, 101); 2], 0).unwrap();
        let all = posterior_sample(&chains, 0.0, 1).unwrap();
        assert_eq!(all, [chains[0].states.clone(), chains[1].states.clone()].concat());
        let half = posterior_sample(&chains, 0.0, 2).unwrap();
        assert_eq!(half.len(), 102);
        assert!(posterior_sample(&chains, 1.0, 1).is_err());
    }

    #[test]
    fn adaptation_moves_toward_target_then_freezes() {
        let f = |x: f64| -0.5 * ((x - 0.5) / 0.01).powi(2);
        let s = ChainSettings {
            length: 20_000,
            step_size: 0.5,
            adaptation: Some(Adaptation { iterations: 10_000, target: TARGET_ACCEPTANCE }),
        };
        let c = rwmh_chain(&f, 0.5, (0.0, 1.0), &s, 9).unwrap();
        let late = c.accepted[10_000..].iter().filter(|a| **a).count() as f64 / 10_000.0;
        assert!((late - TARGET_ACCEPTANCE).abs() < 0.1, "{late}");
    }

    #[test]
    fn five_state_detailed_balance() {
        // piecewise-constant target on five bins of [0, 5)
        let weights = [1.0f64, 3.0, 2.0, 5.0, 0.5];
        let f = |x: f64| {
            let b = (x.floor() as usize).min(4);
            weights[b].ln()
        };
        let c = rwmh_chain(&f, 2.5, (0.0, 5.0 - 1e-12), &settings(1.5, 400_000), 17).unwrap();
        let bins: Vec<usize> = c.states.iter().map(|x| (x.floor() as usize).min(4)).collect();
        let mut flux = [[0usize; 5]; 5];
        for w in bins.windows(2) {
            flux[w[0]][w[1]] += 1;
        }
        for a in 0..5 {
            for b in a + 1..5 {
                let (ab, ba) = (flux[a][b] as f64, flux[b][a] as f64);
                if ab + ba == 0.0 {
                    continue;
                }
                // counts are near-Poisson, so the difference has SE sqrt(ab + ba)
                let se = (ab + ba).sqrt();
                assert!((ab - ba).abs() <= 3.0 * se, "bins {a}->{b}: {ab} vs {ba}");
            }
        }
    }
}
