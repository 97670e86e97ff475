//! Curve agreement metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SampledCurve;

/// Boundary between the peak and tail segments, minutes.
pub const SEGMENT_SPLIT_MIN: f64 = 30.0;

fn frames(y: &SampledCurve, range: (f64, f64)) -> Result<Vec<usize>> {
    let idx = y.grid.frames_in(range.0, range.1);
    if idx.is_empty() {
        return Err(Error::domain(
            "metrics",
            format!("no frame midpoints in [{}, {}) min", range.0, range.1),
        ));
    }
    Ok(idx)
}

/// Centered correlation over all frames.
pub fn pearson_r(yhat: &SampledCurve, y: &SampledCurve) -> Result<f64> {
    yhat.ensure_same_grid(y)?;
    pearson(&yhat.values, &y.values)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::domain("pearson_r", "length mismatch"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::domain("pearson_r", "constant curve"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Σ min / Σ max over frames whose midpoint lies in `range`.
pub fn iou(yhat: &SampledCurve, y: &SampledCurve, range: (f64, f64)) -> Result<f64> {
    yhat.ensure_same_grid(y)?;
    let (mut inter, mut union) = (0.0, 0.0);
    for i in frames(y, range)? {
        inter += yhat.values[i].min(y.values[i]);
        union += yhat.values[i].max(y.values[i]);
    }
    if union == 0.0 {
        return Ok(if inter == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(inter / union)
}

pub fn rmse(yhat: &SampledCurve, y: &SampledCurve, range: (f64, f64)) -> Result<f64> {
    yhat.ensure_same_grid(y)?;
    let idx = frames(y, range)?;
    let ss: f64 = idx.iter().map(|&i| (yhat.values[i] - y.values[i]).powi(2)).sum();
    Ok((ss / idx.len() as f64).sqrt())
}

/// Relative error of the maxima, as a fraction.
pub fn peak_bias(yhat: &SampledCurve, y: &SampledCurve) -> Result<f64> {
    yhat.ensure_same_grid(y)?;
    let py = y.peak();
    if !(py > 0.0) {
        return Err(Error::domain("peak_bias", "target peak must be positive"));
    }
    Ok((yhat.peak() - py).abs() / py)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r: f64,
    pub iou_early: f64,
    pub iou_late: f64,
    pub rmse_early: f64,
    pub rmse_late: f64,
    pub peak_bias: f64,
}

impl MetricsReport {
    pub fn compute(yhat: &SampledCurve, y: &SampledCurve) -> Result<Self> {
        let early = (0.0, SEGMENT_SPLIT_MIN);
        let late = (SEGMENT_SPLIT_MIN, y.grid.total());
        // a flat estimate has no defined correlation; score it as uncorrelated
        let r = match pearson_r(yhat, y) {
            Ok(r) => r,
            Err(Error::Domain { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            r,
            iou_early: iou(yhat, y, early)?,
            iou_late: iou(yhat, y, late)?,
            rmse_early: rmse(yhat, y, early)?,
            rmse_late: rmse(yhat, y, late)?,
            peak_bias: peak_bias(yhat, y)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn curve(v: &[f64]) -> SampledCurve {
        SampledCurve::new(TimeGrid::uniform(v.len(), v.len() as f64).unwrap(), v.to_vec()).unwrap()
    }

    const ALL: (f64, f64) = (0.0, 1e9);

    #[test]
    fn pearson_examples() {
        let y = curve(&[1.0, 4.0, 2.0, 0.5]);
        assert!((pearson_r(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        let affine = curve(&[3.0, 9.0, 5.0, 2.0]);
        assert!((pearson_r(&affine, &y).unwrap() - 1.0).abs() < 1e-15);
        let r = pearson_r(&curve(&[1.0, 2.0, 3.0]), &curve(&[3.0, 2.0, 1.0])).unwrap();
        assert!((r + 1.0).abs() < 1e-15);
        let err = pearson_r(&curve(&[1.0, 1.0]), &curve(&[1.0, 2.0])).unwrap_err();
        assert!(err.to_string().contains("constant curve"));
    }

    #[test]
    fn iou_examples() {
        let y = curve(&[2.0, 1.0]);
        assert_eq!(iou(&y, &y, ALL).unwrap(), 1.0);
        assert_eq!(iou(&curve(&[1.0, 2.0]), &y, ALL).unwrap(), 0.5);
        assert_eq!(iou(&y.scaled(2.0), &y, ALL).unwrap(), 0.5);
        let z = curve(&[0.0, 0.0]);
        assert_eq!(iou(&z, &z, ALL).unwrap(), 1.0);
    }

    #[test]
    fn rmse_examples() {
        let y = curve(&[1.0, 1.0]);
        assert_eq!(rmse(&y, &y, ALL).unwrap(), 0.0);
        assert_eq!(rmse(&curve(&[0.0, 2.0]), &y, ALL).unwrap(), 1.0);
        assert!((rmse(&curve(&[1.3, 1.3]), &y, ALL).unwrap() - 0.3).abs() < 1e-15);
        assert!(rmse(&y, &y, (50.0, 60.0)).is_err());
    }

    #[test]
    fn peak_bias_examples() {
        let y = curve(&[0.2, 1.0, 0.5]);
        assert_eq!(peak_bias(&y, &y).unwrap(), 0.0);
        assert_eq!(peak_bias(&curve(&[0.2, 1.5, 0.5]), &y).unwrap(), 0.5);
        // shifting the peak by one frame leaves the value comparison unchanged
        assert_eq!(peak_bias(&curve(&[1.5, 0.2, 0.5]), &y).unwrap(), 0.5);
        assert!(peak_bias(&y, &curve(&[0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn report_on_identical_curves() {
        let grid = TimeGrid::standard();
        let v: Vec<f64> = grid.midpoints().iter().map(|t| 10.0 * (-t / 3.0f64).exp() + 0.5).collect();
        let y = SampledCurve::new(grid, v).unwrap();
        let m = MetricsReport::compute(&y, &y).unwrap();
        assert_eq!(m.r, 1.0);
        assert_eq!((m.iou_early, m.iou_late), (1.0, 1.0));
        assert_eq!((m.rmse_early, m.rmse_late, m.peak_bias), (0.0, 0.0, 0.0));
    }
}
