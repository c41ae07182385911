//! Synthetic degradation model with periodic partial resets (cleanings).
//!
//! Inputs are `[gain, curvature, start_level]`. Within a segment starting at
//! `tau` the indicator grows as `level + gain * (dt + curvature * dt^2 / 2)`;
//! at every reset time the value is multiplied by `reset_factor`.

use serde::{Deserialize, Serialize};

use super::{Simulator, TimeGrid, Trajectory};
use crate::error::{Error, Result};

pub const RESET_NAMES: [&str; 3] = ["gain", "curvature", "start_level"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseResetModel {
    grid: TimeGrid,
    reset_times: Vec<f64>,
    reset_factor: f64,
}

/// Growth law of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentLaw {
    pub gain: f64,
    pub curvature: f64,
}

impl SegmentLaw {
    fn validate(&self) -> Result<()> {
        if self.gain >= 0.0 && self.curvature >= 0.0 && self.gain.is_finite() && self.curvature.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "segment growth needs gain >= 0 and curvature >= 0, got {self:?}"
            )))
        }
    }

    #[inline]
    fn growth(&self, dt: f64) -> f64 {
        self.gain * (dt + 0.5 * self.curvature * dt * dt)
    }
}

impl PiecewiseResetModel {
    pub fn new(grid: TimeGrid, reset_times: Vec<f64>, reset_factor: f64) -> Result<Self> {
        if !(reset_factor > 0.0 && reset_factor < 1.0) {
            return Err(Error::Config(format!("reset factor must lie in (0, 1), got {reset_factor}")));
        }
        if reset_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("reset times must be strictly increasing".into()));
        }
        if let Some(&t) = reset_times.iter().find(|&&t| !(t > grid.start() && t < grid.end())) {
            return Err(Error::Config(format!(
                "reset time {t} is outside the open horizon ({}, {})",
                grid.start(),
                grid.end()
            )));
        }
        Ok(Self {
            grid,
            reset_times,
            reset_factor,
        })
    }

    pub fn reset_times(&self) -> &[f64] {
        &self.reset_times
    }

    pub fn reset_factor(&self) -> f64 {
        self.reset_factor
    }

    pub fn segment_count(&self) -> usize {
        self.reset_times.len() + 1
    }

    /// `[start, end)` of segment `s`; the last segment closes on the grid end.
    pub fn segment_bounds(&self, s: usize) -> (f64, f64) {
        let start = if s == 0 { self.grid.start() } else { self.reset_times[s - 1] };
        let end = self.reset_times.get(s).copied().unwrap_or(self.grid.end());
        (start, end)
    }

    pub fn segment_of(&self, t: f64) -> usize {
        self.reset_times.partition_point(|&r| r <= t)
    }

    fn parse(x: &[f64]) -> Result<(SegmentLaw, f64)> {
        if x.len() != 3 {
            return Err(Error::Shape(format!("reset model takes 3 inputs, got {}", x.len())));
        }
        let law = SegmentLaw { gain: x[0], curvature: x[1] };
        if !(x[2] >= 0.0 && x[2].is_finite()) {
            return Err(Error::Domain(format!("start level must be non-negative, got {}", x[2])));
        }
        Ok((law, x[2]))
    }

    /// Post-reset level at the start of every segment.
    fn segment_levels(&self, laws: &[SegmentLaw], start_level: f64) -> Vec<f64> {
        let mut levels = Vec::with_capacity(self.segment_count());
        let mut level = start_level;
        levels.push(level);
        for s in 0..self.reset_times.len() {
            let (a, b) = self.segment_bounds(s);
            level = self.reset_factor * (level + laws[s].growth(b - a));
            levels.push(level);
        }
        levels
    }

    fn check_laws(&self, laws: &[SegmentLaw]) -> Result<()> {
        if laws.len() != self.segment_count() {
            return Err(Error::Shape(format!(
                "{} segment laws for {} segments",
                laws.len(),
                self.segment_count()
            )));
        }
        laws.iter().try_for_each(SegmentLaw::validate)
    }

    /// Right-continuous value at `t` with a distinct growth law per segment.
    pub fn value_at_segments(&self, laws: &[SegmentLaw], start_level: f64, t: f64) -> Result<f64> {
        self.check_laws(laws)?;
        let levels = self.segment_levels(laws, start_level);
        let s = self.segment_of(t);
        let (a, _) = self.segment_bounds(s);
        Ok(levels[s] + laws[s].growth(t - a))
    }

    /// Left limit at `t` (the value just before a reset at `t`).
    pub fn value_before_segments(&self, laws: &[SegmentLaw], start_level: f64, t: f64) -> Result<f64> {
        self.check_laws(laws)?;
        let levels = self.segment_levels(laws, start_level);
        let s = self.reset_times.partition_point(|&r| r < t);
        let (a, _) = self.segment_bounds(s);
        Ok(levels[s] + laws[s].growth(t - a))
    }

    pub fn trajectory_segments(&self, laws: &[SegmentLaw], start_level: f64) -> Result<Trajectory> {
        self.check_laws(laws)?;
        let levels = self.segment_levels(laws, start_level);
        let values = self
            .grid
            .points()
            .iter()
            .map(|&t| {
                let s = self.segment_of(t);
                let (a, _) = self.segment_bounds(s);
                levels[s] + laws[s].growth(t - a)
            })
            .collect();
        Trajectory::new(self.grid.clone(), values)
    }

    /// Stand-alone, reset-free model of segment `s` on its own sub-grid; the
    /// segment's start level becomes the third input.
    pub fn segment_model(&self, s: usize) -> Result<PiecewiseResetModel> {
        if s >= self.segment_count() {
            return Err(Error::Config(format!("segment {s} does not exist")));
        }
        let (a, b) = self.segment_bounds(s);
        let mut pts = vec![a];
        pts.extend(self.grid.points().iter().copied().filter(|&t| t > a && t < b));
        pts.push(b);
        PiecewiseResetModel::new(TimeGrid::new(pts)?, Vec::new(), self.reset_factor)
    }
}

/// One shared growth law across segments.
pub fn piecewise_reset_trajectory(
    inputs: &[f64],
    grid: &TimeGrid,
    reset_times: &[f64],
    reset_factor: f64,
) -> Result<Trajectory> {
    let model = PiecewiseResetModel::new(grid.clone(), reset_times.to_vec(), reset_factor)?;
    let (law, start) = PiecewiseResetModel::parse(inputs)?;
    model.trajectory_segments(&vec![law; model.segment_count()], start)
}

/// The reset model with its segment laws fixed; the only input is the start
/// level. Used to generate data from distinct per-segment ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSegmentLaws {
    model: PiecewiseResetModel,
    laws: Vec<SegmentLaw>,
}

impl FixedSegmentLaws {
    pub fn new(model: PiecewiseResetModel, laws: Vec<SegmentLaw>) -> Result<Self> {
        model.check_laws(&laws)?;
        Ok(Self { model, laws })
    }
}

impl Simulator for FixedSegmentLaws {
    fn dim(&self) -> usize {
        1
    }

    fn grid(&self) -> &TimeGrid {
        &self.model.grid
    }

    fn simulate(&self, x: &[f64]) -> Result<Vec<f64>> {
        match x {
            [level] if *level >= 0.0 && level.is_finite() => {
                Ok(self.model.trajectory_segments(&self.laws, *level)?.into_values())
            }
            _ => Err(Error::Shape("fixed-law reset model takes one non-negative start level".into())),
        }
    }
}

impl Simulator for PiecewiseResetModel {
    fn dim(&self) -> usize {
        3
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn simulate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (law, start) = Self::parse(x)?;
        Ok(self
            .trajectory_segments(&vec![law; self.segment_count()], start)?
            .into_values())
    }
}
