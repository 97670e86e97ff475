//! Frame timing and curves sampled on it. Times are in minutes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    starts: Vec<f64>,
    ends: Vec<f64>,
}

/// Default 30-frame, 90-minute schedule: 6x0.5, 6x1, 6x2, 6x5, 6x6.5 min.
const STANDARD_BLOCKS: [(usize, f64); 5] = [(6, 0.5), (6, 1.0), (6, 2.0), (6, 5.0), (6, 6.5)];

impl TimeGrid {
    pub fn new(starts: Vec<f64>, ends: Vec<f64>) -> Result<Self> {
        if starts.is_empty() || starts.len() != ends.len() {
            return Err(Error::Config(format!(
                "time grid needs matching non-empty starts/ends, got {} and {}",
                starts.len(),
                ends.len()
            )));
        }
        if starts[0] != 0.0 {
            return Err(Error::Config("first frame must start at 0".into()));
        }
        for i in 0..starts.len() {
            if !(ends[i] > starts[i]) || !ends[i].is_finite() {
                return Err(Error::Config(format!("frame {i} has non-positive duration")));
            }
            if i + 1 < starts.len() && starts[i + 1] != ends[i] {
                return Err(Error::Config(format!("gap or overlap after frame {i}")));
            }
        }
        Ok(TimeGrid { starts, ends })
    }

    pub fn standard() -> Self {
        let mut starts = Vec::with_capacity(30);
        let mut ends = Vec::with_capacity(30);
        let mut t = 0.0;
        for (n, d) in STANDARD_BLOCKS {
            for _ in 0..n {
                starts.push(t);
                t += d;
                ends.push(t);
            }
        }
        TimeGrid { starts, ends }
    }

    /// Contiguous frames of equal length.
    pub fn uniform(frames: usize, total: f64) -> Result<Self> {
        let d = total / frames as f64;
        let starts = (0..frames).map(|i| i as f64 * d).collect::<Vec<_>>();
        let ends = (1..=frames).map(|i| i as f64 * d).collect();
        Self::new(starts, ends)
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn ends(&self) -> &[f64] {
        &self.ends
    }

    pub fn total(&self) -> f64 {
        *self.ends.last().expect("grid is non-empty")
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.starts
            .iter()
            .zip(&self.ends)
            .map(|(s, e)| 0.5 * (s + e))
            .collect()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.starts.iter().zip(&self.ends).map(|(s, e)| e - s).collect()
    }

    /// Frame indices whose midpoint lies in `[t0, t1)`; the final frame is
    /// included when `t1` reaches the end of the grid.
    pub fn frames_in(&self, t0: f64, t1: f64) -> Vec<usize> {
        let end = self.total();
        self.midpoints()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m >= t0 && (m < t1 || (t1 >= end && m <= t1)))
            .map(|(i, _)| i)
            .collect()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::standard()
    }
}

/// A time-activity curve sampled at frame midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}-frame grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(SampledCurve { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let n = grid.len();
        SampledCurve {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        SampledCurve {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn ensure_same_grid(&self, other: &SampledCurve) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "curves on different grids ({} vs {} frames)",
                self.grid.len(),
                other.grid.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_layout() {
        let g = TimeGrid::standard();
        assert_eq!(g.len(), 30);
        assert_eq!(g.starts()[0], 0.0);
        assert!((g.total() - 90.0).abs() < 1e-12);
        for i in 1..30 {
            assert_eq!(g.starts()[i], g.ends()[i - 1]);
        }
        assert_eq!(g.midpoints()[0], 0.25);
    }

    #[test]
    fn segments_partition_frames() {
        let g = TimeGrid::standard();
        let early = g.frames_in(0.0, 30.0);
        let late = g.frames_in(30.0, 90.0);
        assert_eq!(early.len() + late.len(), 30);
        assert_eq!(late.len(), 10);
        // the 26-31 min frame has midpoint 28.5 and belongs to the early segment
        assert!(early.contains(&19));
    }

    #[test]
    fn rejects_gaps() {
        assert!(TimeGrid::new(vec![0.0, 1.5], vec![1.0, 2.0]).is_err());
        assert!(TimeGrid::new(vec![0.5], vec![1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0], vec![0.0]).is_err());
    }
}
