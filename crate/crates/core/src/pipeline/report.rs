//! On-disk layout of a finished run.
//!
//! ```text
//! history.json                 summary: iterations, KL, R, acceptance, RUL moments
//! seeds.json                   every derived random stream
//! hsic_<k>.csv                 sensitivity table of iteration k
//! posteriors/<var>.csv         latest posterior sample of each calibrated variable
//! kde/<var>.csv                final marginal density on its support
//! rul_prior.csv, rul_posterior.csv
//! trajectories_prior.csv, trajectories_posterior.csv
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{FinalReport, IterationReport, PipelineConfig, RulSummary, SeedPlan, Termination};
use crate::error::{Error, Result};
use crate::models::TimeGrid;
use crate::prob::stats::linspace;
use crate::prob::Marginal;

#[derive(Serialize)]
struct History<'a> {
    termination: Termination,
    chains_converged: bool,
    current_time: f64,
    threshold: f64,
    names: &'a [String],
    nominal: &'a [f64],
    kl_by_variable: BTreeMap<String, f64>,
    iterations: &'a [IterationReport],
    rul_prior: Option<&'a RulSummary>,
    rul_posterior: Option<&'a RulSummary>,
    final_marginals: Vec<&'static str>,
}

#[derive(Serialize)]
struct Seeds {
    base: u64,
    doe: Vec<u64>,
    weights: Vec<u64>,
    chains: Vec<u64>,
    prior_trajectories: u64,
    posterior_trajectories: u64,
}

fn seeds_for(plan: SeedPlan, iterations: usize) -> Seeds {
    Seeds {
        base: plan.base,
        doe: (0..iterations).map(|k| plan.doe(k)).collect(),
        weights: (0..iterations).map(|k| plan.weights(k)).collect(),
        chains: (0..iterations).map(|k| plan.chains(k)).collect(),
        prior_trajectories: plan.prior_trajectories(),
        posterior_trajectories: plan.posterior_trajectories(),
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// `time,s0,s1,...` for the first `keep` columns.
pub fn trajectories_csv(grid: &TimeGrid, y: &DMatrix<f64>, keep: usize) -> String {
    let k = keep.min(y.ncols());
    let mut s = String::from("time");
    for j in 0..k {
        let _ = write!(s, ",s{j}");
    }
    s.push('\n');
    for (i, t) in grid.points().iter().enumerate() {
        let _ = write!(s, "{t}");
        for j in 0..k {
            let _ = write!(s, ",{}", y[(i, j)]);
        }
        s.push('\n');
    }
    s
}

fn density_range(m: &Marginal) -> (f64, f64) {
    match m {
        Marginal::Gaussian { mean, variance } => {
            let sd = variance.sqrt();
            (mean - 4.0 * sd, mean + 4.0 * sd)
        }
        Marginal::Gamma { shape, rate } => {
            let sd = shape.sqrt() / rate;
            (0.0, shape / rate + 6.0 * sd)
        }
        _ => m.support(),
    }
}

/// `x,density` on `points` evenly spaced nodes.
pub fn density_csv(m: &Marginal, points: usize) -> String {
    let (a, b) = density_range(m);
    let mut s = String::from("x,density\n");
    for x in linspace(a, b, points.max(2)) {
        let _ = writeln!(s, "{x},{}", m.pdf(x));
    }
    s
}

/// Writes the run into `dir`, creating it when needed.
pub fn write_report(report: &FinalReport, config: &PipelineConfig, dir: &Path) -> Result<()> {
    mkdir(dir)?;
    let history = History {
        termination: report.termination,
        chains_converged: report.chains_converged(),
        current_time: report.current_time,
        threshold: report.threshold,
        names: &report.names,
        nominal: &report.nominal,
        kl_by_variable: report.kl_by_variable(),
        iterations: &report.history,
        rul_prior: report.rul_prior_summary.as_ref(),
        rul_posterior: report.rul_posterior_summary.as_ref(),
        final_marginals: report.final_prior.marginals().iter().map(Marginal::kind_name).collect(),
    };
    write(&dir.join("history.json"), &json(&history)?)?;
    write(&dir.join("seeds.json"), &json(&seeds_for(report.seeds, report.history.len()))?)?;

    for h in &report.history {
        if let Some(t) = &h.hsic {
            write(&dir.join(format!("hsic_{}.csv", h.iteration)), &t.to_csv())?;
        }
    }

    let post_dir = dir.join("posteriors");
    let kde_dir = dir.join("kde");
    mkdir(&post_dir)?;
    mkdir(&kde_dir)?;
    for (name, (sample, _)) in report.latest_posteriors() {
        let mut s = String::from("value\n");
        for v in sample {
            let _ = writeln!(s, "{v}");
        }
        write(&post_dir.join(format!("{name}.csv")), &s)?;
    }
    for (name, m) in report.names.iter().zip(report.final_prior.marginals()) {
        write(&kde_dir.join(format!("{name}.csv")), &density_csv(m, config.kde_points))?;
    }

    if let Some(r) = &report.rul_prior {
        write(&dir.join("rul_prior.csv"), &r.to_csv())?;
    }
    if let Some(r) = &report.rul_posterior {
        write(&dir.join("rul_posterior.csv"), &r.to_csv())?;
    }
    let keep = config.export_trajectories;
    write(
        &dir.join("trajectories_prior.csv"),
        &trajectories_csv(&report.grid, &report.prior_trajectories, keep),
    )?;
    write(
        &dir.join("trajectories_posterior.csv"),
        &trajectories_csv(&report.grid, &report.posterior_trajectories, keep),
    )?;
    Ok(())
}
