//! Paris-Erdogan fatigue crack growth, integrated with explicit Euler steps.
//!
//! Units are fixed: stresses in MPa, lengths in meters, time in load cycles.
//! The material constant `C` is only meaningful at ~1e-10 under this convention.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Simulator, TimeGrid, Trajectory};
use crate::error::{Error, Result};

/// Variable names in input-vector order.
pub const PARIS_NAMES: [&str; 6] = ["C", "m", "sigma_max", "sigma_min", "Y", "a0"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParisInputs {
    pub c: f64,
    pub m: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub y: f64,
    pub a0: f64,
}

impl ParisInputs {
    /// Nominal material and loading values of the reference experiment.
    pub const NOMINAL: ParisInputs = ParisInputs {
        c: 1e-10,
        m: 3.0,
        sigma_max: 100.0,
        sigma_min: 10.0,
        y: 1.1,
        a0: 1e-3,
    };

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != 6 {
            return Err(Error::Shape(format!("Paris model takes 6 inputs, got {}", x.len())));
        }
        Ok(Self {
            c: x[0],
            m: x[1],
            sigma_max: x[2],
            sigma_min: x[3],
            y: x[4],
            a0: x[5],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.c, self.m, self.sigma_max, self.sigma_min, self.y, self.a0]
    }

    /// `C = 0` is accepted (zero growth) so the boundary can be probed.
    pub fn validate(&self) -> Result<()> {
        let ok = self.c >= 0.0
            && self.m > 0.0
            && self.sigma_max > self.sigma_min
            && self.sigma_min >= 0.0
            && self.y > 0.0
            && self.a0 > 0.0
            && self.to_vec().iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid Paris inputs {self:?}")))
        }
    }

    /// da/dN = C * ((sigma_max - sigma_min) * sqrt(pi a) * Y)^m
    pub fn growth_rate(&self, a: f64) -> f64 {
        let delta_k = (self.sigma_max - self.sigma_min) * (PI * a).sqrt() * self.y;
        self.c * delta_k.powf(self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParisModel {
    grid: TimeGrid,
    /// Crack lengths are clipped here once reached.
    cap: Option<f64>,
    /// Largest admissible increment per step before an overflow error is raised.
    growth_limit: f64,
}

impl ParisModel {
    pub fn new(grid: TimeGrid, cap: Option<f64>, growth_limit: f64) -> Result<Self> {
        if let Some(c) = cap {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("crack cap must be positive, got {c}")));
            }
        }
        if !(growth_limit > 0.0) {
            return Err(Error::Config(format!("growth limit must be positive, got {growth_limit}")));
        }
        Ok(Self { grid, cap, growth_limit })
    }

    /// Grid of `step` cycles reaching `horizon`, growth limit of ten thresholds per step.
    pub fn with_threshold(step: f64, horizon: f64, threshold: f64, cap: Option<f64>) -> Result<Self> {
        Self::new(TimeGrid::regular(0.0, step, horizon)?, cap, 10.0 * threshold)
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    pub fn trajectory(&self, inputs: &ParisInputs) -> Result<Trajectory> {
        let values = paris_values(inputs, &self.grid, self.cap, self.growth_limit)?;
        Trajectory::new(self.grid.clone(), values)
    }
}

fn paris_values(inputs: &ParisInputs, grid: &TimeGrid, cap: Option<f64>, growth_limit: f64) -> Result<Vec<f64>> {
    inputs.validate()?;
    let pts = grid.points();
    let mut values = Vec::with_capacity(pts.len());
    let mut a = inputs.a0;
    if let Some(c) = cap {
        a = a.min(c);
    }
    values.push(a);
    // C (dsigma Y sqrt(pi))^m a^(m/2): the a-independent factor is hoisted
    let k = inputs.c * ((inputs.sigma_max - inputs.sigma_min) * inputs.y * PI.sqrt()).powf(inputs.m);
    let half_m = 0.5 * inputs.m;
    let mut saturated = matches!(cap, Some(c) if a >= c);
    for w in pts.windows(2) {
        if saturated {
            values.push(a);
            continue;
        }
        let da = (w[1] - w[0]) * k * a.powf(half_m);
        let next = a + da;
        match cap {
            Some(c) if !next.is_finite() || next >= c => {
                a = c;
                saturated = true;
            }
            _ if !next.is_finite() || da > growth_limit => {
                return Err(Error::NumericalOverflow {
                    cycle: w[1],
                    detail: format!("crack increment {da} exceeds limit {growth_limit} (a = {a})"),
                });
            }
            _ => a = next,
        }
        values.push(a);
    }
    Ok(values)
}

/// Free-function form: integrate on `grid`, clip at `cap` when given.
pub fn paris_trajectory(inputs: &ParisInputs, grid: &TimeGrid, cap: Option<f64>) -> Result<Trajectory> {
    let values = paris_values(inputs, grid, cap, f64::MAX)?;
    Trajectory::new(grid.clone(), values)
}

impl Simulator for ParisModel {
    fn dim(&self) -> usize {
        6
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn simulate(&self, x: &[f64]) -> Result<Vec<f64>> {
        paris_values(&ParisInputs::from_slice(x)?, &self.grid, self.cap, self.growth_limit)
    }
}

/// First grid time at which `values` reaches `threshold`, linearly interpolated
/// inside the crossing cell. `None` if never reached.
pub fn first_crossing(grid: &TimeGrid, values: &[f64], threshold: f64) -> Option<f64> {
    let pts = grid.points();
    if values[0] >= threshold {
        return Some(pts[0]);
    }
    values.windows(2).enumerate().find_map(|(i, w)| {
        (w[1] >= threshold).then(|| pts[i] + (threshold - w[0]) / (w[1] - w[0]) * (pts[i + 1] - pts[i]))
    })
}
