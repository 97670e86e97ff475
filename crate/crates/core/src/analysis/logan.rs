//! Logan graphical analysis and voxelwise distribution-volume maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SampledCurve;
use crate::sim::DynamicVolume;

/// Equilibration time used throughout, minutes.
pub const DEFAULT_T_STAR: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoganResult {
    pub vt: f64,
    pub intercept: f64,
    pub n_points: usize,
    pub t_star: f64,
}

/// Running trapezoid integral at each sample time, anchored at `(0, 0)`.
pub fn cumulative_integral(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let (mut t_prev, mut c_prev, mut acc) = (0.0, 0.0, 0.0);
    for (&t, &c) in times.iter().zip(values) {
        acc += 0.5 * (c + c_prev) * (t - t_prev);
        out.push(acc);
        t_prev = t;
        c_prev = c;
    }
    out
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("logan", "zero variance in the normalized-time axis"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `∫C_T/C_T` against `∫C_P/C_T` over frames with midpoint ≥ `t_star`.
pub fn logan_vt(ct: &SampledCurve, cp: &SampledCurve, t_star: f64) -> Result<LoganResult> {
    ct.ensure_same_grid(cp)?;
    logan_slices(&ct.grid.midpoints(), &ct.values, &cp.values, t_star)
}

pub(crate) fn logan_slices(times: &[f64], ct: &[f64], cp: &[f64], t_star: f64) -> Result<LoganResult> {
    let ict = cumulative_integral(times, ct);
    let icp = cumulative_integral(times, cp);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..times.len() {
        if times[i] < t_star {
            continue;
        }
        if !(ct[i] > 0.0) {
            return Err(Error::domain(
                "logan",
                format!("non-positive tissue value at t={} min", times[i]),
            ));
        }
        xs.push(icp[i] / ct[i]);
        ys.push(ict[i] / ct[i]);
    }
    if xs.len() < 2 {
        return Err(Error::domain("logan", format!("{} usable frames after t*", xs.len())));
    }
    let (vt, intercept) = ols(&xs, &ys)?;
    Ok(LoganResult {
        vt,
        intercept,
        n_points: xs.len(),
        t_star,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricMap {
    pub dims: [usize; 3],
    /// NaN outside the mask and where the fit failed.
    pub vt: Vec<f64>,
    pub failures: usize,
    pub fitted: usize,
}

/// Voxelwise Logan fit inside `mask`.
pub fn parametric_map(vol: &DynamicVolume, cp: &SampledCurve, t_star: f64, mask: &[bool]) -> Result<ParametricMap> {
    if vol.grid != cp.grid {
        return Err(Error::GridMismatch("volume and input function grids differ".into()));
    }
    if mask.len() != vol.voxels() {
        return Err(Error::Shape {
            op: "parametric_map",
            lhs: vol.dims.to_vec(),
            rhs: vec![mask.len()],
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::domain("parametric_map", "empty mask"));
    }
    let times = cp.grid.midpoints();
    let vt: Vec<Option<f64>> = (0..vol.voxels())
        .into_par_iter()
        .map(|v| {
            if !mask[v] {
                return None;
            }
            let ct = vol.voxel_curve(v);
            Some(logan_slices(&times, &ct, &cp.values, t_star).map(|r| r.vt).unwrap_or(f64::NAN))
        })
        .collect();
    let fitted = vt.iter().filter(|v| matches!(v, Some(x) if x.is_finite())).count();
    let failures = vt.iter().filter(|v| matches!(v, Some(x) if !x.is_finite())).count();
    Ok(ParametricMap {
        dims: vol.dims,
        vt: vt.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        failures,
        fitted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapErrors {
    pub mae: f64,
    pub rmse: f64,
    pub voxels: usize,
}

/// MAE and RMSE over voxels where both maps are finite.
pub fn map_errors(estimate: &[f64], reference: &[f64]) -> Result<MapErrors> {
    if estimate.len() != reference.len() {
        return Err(Error::domain("map_errors", "map sizes differ"));
    }
    let (mut sa, mut ss, mut n) = (0.0, 0.0, 0usize);
    for (a, b) in estimate.iter().zip(reference) {
        if a.is_finite() && b.is_finite() {
            let d = a - b;
            sa += d.abs();
            ss += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::domain("map_errors", "no voxel valid in both maps"));
    }
    Ok(MapErrors {
        mae: sa / n as f64,
        rmse: (ss / n as f64).sqrt(),
        voxels: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::sim::{gen_aif, tissue_tac, FengAif};

    fn input() -> FengAif {
        FengAif {
            a1: 280.0,
            a2: 2.5,
            a3: 0.7,
            l1: 4.2,
            l2: 0.25,
            l3: 0.01,
            delay: 0.4,
        }
    }

    #[test]
    fn identical_curves_give_unit_slope() {
        let grid = TimeGrid::standard();
        let (_, cp) = gen_aif(&input(), &grid, 0.01).unwrap();
        let r = logan_vt(&cp, &cp, DEFAULT_T_STAR).unwrap();
        assert!((r.vt - 1.0).abs() < 1e-12);
        assert!(r.intercept.abs() < 1e-10);
        assert_eq!(r.n_points, 10);
    }

    #[test]
    fn recovers_one_tissue_vt() {
        let grid = TimeGrid::standard();
        let (fine, cp) = gen_aif(&input(), &grid, 0.01).unwrap();
        let ct = tissue_tac(&fine, 0.1, 0.05, &grid).unwrap();
        let r = logan_vt(&ct, &cp, DEFAULT_T_STAR).unwrap();
        assert!((r.vt - 2.0).abs() / 2.0 < 0.02, "vt {}", r.vt);
    }

    #[test]
    fn input_scaling_is_inverse() {
        let grid = TimeGrid::standard();
        let (fine, cp) = gen_aif(&input(), &grid, 0.01).unwrap();
        let ct = tissue_tac(&fine, 0.2, 0.04, &grid).unwrap();
        let a = logan_vt(&ct, &cp, DEFAULT_T_STAR).unwrap();
        let b = logan_vt(&ct, &cp.scaled(2.5), DEFAULT_T_STAR).unwrap();
        assert!((b.vt * 2.5 - a.vt).abs() < 1e-10);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let grid = TimeGrid::standard();
        let (_, cp) = gen_aif(&input(), &grid, 0.01).unwrap();
        let zero = SampledCurve::zeros(grid.clone());
        assert!(logan_vt(&zero, &cp, DEFAULT_T_STAR).is_err());
        assert!(logan_vt(&cp, &cp, 89.0).is_err());
    }

    #[test]
    fn map_error_identities() {
        let a = vec![1.0, 2.0, f64::NAN, 4.0];
        let e = map_errors(&a, &a).unwrap();
        assert_eq!((e.mae, e.rmse, e.voxels), (0.0, 0.0, 3));
        let b = vec![1.5, 1.0, 3.0, 4.0];
        let e = map_errors(&a, &b).unwrap();
        assert!(e.mae <= e.rmse);
    }
}
