use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing simulation time grid (cycles or years).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config(format!("time grid needs at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("time grid contains non-finite values".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("time grid not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self(points))
    }

    /// `start, start + step, ...` up to the first node at or beyond `end`.
    pub fn regular(start: f64, step: f64, end: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !(end > start) {
            return Err(Error::Config(format!(
                "regular grid needs step > 0 and end > start, got start {start}, step {step}, end {end}"
            )));
        }
        let n = ((end - start) / step).ceil() as usize + 1;
        Self::new((0..n).map(|i| start + step * i as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.0[0]
    }

    pub fn end(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start() && t <= self.end()
    }

    /// Index `i` of the cell `[t_i, t_{i+1}]` holding `t`, with the weight of `t_{i+1}`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !self.contains(t) {
            return Err(Error::Domain(format!(
                "time {t} is outside the grid [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        let pts = &self.0;
        let upper = pts.partition_point(|&p| p <= t);
        // exact node hit, or the final node
        if upper > 0 && pts[upper - 1] == t {
            let i = upper - 1;
            return Ok(if i == pts.len() - 1 { (i - 1, 1.0) } else { (i, 0.0) });
        }
        let i = upper - 1;
        let frac = (t - pts[i]) / (pts[i + 1] - pts[i]);
        Ok((i, frac))
    }

    /// Piecewise-linear interpolation of `values` (one per node) at `t`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!("{} values for a {}-node grid", values.len(), self.len())));
        }
        let (i, frac) = self.locate(t)?;
        Ok(lerp(values[i], values[i + 1], frac))
    }
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    if frac == 0.0 {
        a
    } else if frac == 1.0 {
        b
    } else {
        a + frac * (b - a)
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.0
    }
}
