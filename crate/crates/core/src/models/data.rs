//! Observation groups: synthetic generation and the `group_id,time,value` CSV format.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Simulator;
use crate::error::{Error, Result};
use crate::prob::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGroup {
    pub group_id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Known only for synthetic data; inference never reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
}

impl DataGroup {
    pub fn new(group_id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let group_id = group_id.into();
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Shape(format!(
                "group {group_id}: {} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("group {group_id}: times must be strictly increasing")));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("group {group_id}: non-finite entry")));
        }
        Ok(Self {
            group_id,
            times,
            values,
            noise_sd: None,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Observations with `lo <= t < hi`, or `None` when nothing is left.
    pub fn restrict(&self, lo: f64, hi: f64) -> Option<DataGroup> {
        let (times, values): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(&t, _)| t >= lo && t < hi)
            .map(|(&t, &v)| (t, v))
            .unzip();
        (!times.is_empty()).then(|| DataGroup {
            group_id: self.group_id.clone(),
            times,
            values,
            noise_sd: self.noise_sd,
        })
    }
}

/// Acquisition times and noise level of one synthetic group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub times: Vec<f64>,
    pub noise_sd: f64,
}

impl GroupSpec {
    /// `count` evenly spread times in `[start, end]`.
    pub fn evenly(start: f64, end: f64, count: usize, noise_sd: f64) -> Self {
        let times = if count == 1 {
            vec![end]
        } else {
            crate::prob::stats::linspace(start, end, count)
        };
        Self { times, noise_sd }
    }
}

/// Four groups with noise 1 to 4 (in value units of `unit`), 8, 10, 12 and 15
/// points over `[start, end]`, each mesh shifted so no two groups share a time.
pub fn default_group_specs(start: f64, end: f64, unit: f64) -> Vec<GroupSpec> {
    let counts = [8usize, 10, 12, 15];
    let width = end - start;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let shift = width * 0.013 * i as f64;
            GroupSpec::evenly(start + shift, end - 0.5 * shift, c, unit * (i + 1) as f64)
        })
        .collect()
}

/// Noisy observations of the trajectory at `x_true`, one group per `GroupSpec`.
/// Group ids are `g1`, `g2`, ...
pub fn generate_data_groups(
    model: &dyn Simulator,
    x_true: &[f64],
    specs: &[GroupSpec],
    seed: u64,
) -> Result<Vec<DataGroup>> {
    let grid = model.grid();
    let nominal = model.simulate(x_true)?;
    let mut rng = rng_from_seed(seed);
    let mut groups = Vec::with_capacity(specs.len());
    for (i, group) in specs.iter().enumerate() {
        if !(group.noise_sd > 0.0 && group.noise_sd.is_finite()) {
            return Err(Error::Config(format!("group {}: noise_sd must be positive", i + 1)));
        }
        let noise = Normal::new(0.0, group.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
        let values = group
            .times
            .iter()
            .map(|&t| Ok(grid.interpolate(&nominal, t)? + noise.sample(&mut rng)))
            .collect::<Result<Vec<f64>>>()?;
        let mut g = DataGroup::new(format!("g{}", i + 1), group.times.clone(), values)?;
        g.noise_sd = Some(group.noise_sd);
        groups.push(g);
    }
    Ok(groups)
}

/// Every observation time across `groups`, sorted and deduplicated.
pub fn merged_times(groups: &[DataGroup]) -> Vec<f64> {
    let mut t: Vec<f64> = groups.iter().flat_map(|g| g.times.iter().copied()).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

pub fn write_data_csv(groups: &[DataGroup], path: &Path) -> Result<()> {
    let mut out = String::from("group_id,time,value\n");
    for g in groups {
        for (t, v) in g.times.iter().zip(&g.values) {
            out.push_str(&format!("{},{t},{v}\n", g.group_id));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `group_id,time,value` rows. Groups come back in order of first
/// appearance, each sorted by time.
pub fn load_data_csv(path: &Path) -> Result<Vec<DataGroup>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(err) => Error::io(path, err),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let expected = ["group_id", "time", "value"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(parse_err(1, format!("expected header `group_id,time,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", record.len())));
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty group_id".into()));
        }
        let num = |k: usize, name: &str| -> Result<f64> {
            let s = record[k].trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("{name} `{s}` is not a finite number")))
        };
        let (t, v) = (num(1, "time")?, num(2, "value")?);
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((t, v, line));
    }
    if order.is_empty() {
        return Err(parse_err(1, "no observations".into()));
    }

    let mut groups = Vec::with_capacity(order.len());
    for id in order {
        let mut obs = rows.remove(&id).unwrap_or_default();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(parse_err(
                w[0].2.max(w[1].2),
                format!("duplicate time {} in group {id}", w[0].0),
            ));
        }
        let (times, values) = obs.iter().map(|&(t, v, _)| (t, v)).unzip();
        groups.push(DataGroup::new(id, times, values)?);
    }
    Ok(groups)
}
