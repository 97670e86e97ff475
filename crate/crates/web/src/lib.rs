//! Browser bindings for the demo page in `www/`.
//!
//! Each export has a plain Rust twin returning `dlif::Result` so the logic is
//! testable off the browser; the wasm wrappers only translate errors.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use dlif::analysis::{cumulative_integral, logan_vt};
use dlif::basis::{eval_expsig, eval_gaussian, ExpSigmoidParams, GaussianParams};
use dlif::grid::{SampledCurve, TimeGrid};
use dlif::rng::Rng;
use dlif::sim::{gen_aif, metabolite_remainder, sample_feng, tissue_response, SimRanges, FINE_DT};
use dlif::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Rows of `samples` values over `[0, t_end]`: time, the weighted sum, then one
/// row per basis function. `shape` is σ for Gaussians and λ for exp-sigmoids;
/// `steepness` is ignored for Gaussians.
pub fn basis_table(
    family: &str,
    weights: &[f64],
    locations: &[f64],
    shape: &[f64],
    steepness: &[f64],
    t_end: f64,
    samples: usize,
) -> Result<Vec<f64>> {
    let k = weights.len();
    if locations.len() != k || shape.len() != k {
        return Err(Error::Config("basis parameter arrays differ in length".into()));
    }
    if samples < 2 || !(t_end > 0.0) {
        return Err(Error::Config("need at least 2 samples over a positive span".into()));
    }
    if shape.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Config("widths and rates must be positive".into()));
    }
    let times: Vec<f64> = (0..samples).map(|i| t_end * i as f64 / (samples - 1) as f64).collect();
    let term: Box<dyn Fn(usize, f64) -> f64> = match family {
        "gaussian" => Box::new(|j, t| {
            eval_gaussian(
                &GaussianParams {
                    weights: vec![weights[j]],
                    locations: vec![locations[j]],
                    scales: vec![shape[j]],
                },
                t,
            )
        }),
        "expsig" => {
            if steepness.len() != k {
                return Err(Error::Config("steepness array differs in length".into()));
            }
            Box::new(|j, t| {
                eval_expsig(
                    &ExpSigmoidParams {
                        weights: vec![weights[j]],
                        rates: vec![shape[j]],
                        centers: vec![locations[j]],
                        steepness: vec![steepness[j]],
                    },
                    t,
                )
            })
        }
        other => return Err(Error::Config(format!("unknown basis family {other:?}"))),
    };
    let mut out = Vec::with_capacity((k + 2) * samples);
    out.extend(&times);
    let rows: Vec<Vec<f64>> = (0..k).map(|j| times.iter().map(|&t| term(j, t)).collect()).collect();
    out.extend((0..samples).map(|i| rows.iter().map(|r| r[i]).sum::<f64>()));
    for r in rows {
        out.extend(r);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn basis_curves(
    family: &str,
    weights: &[f64],
    locations: &[f64],
    shape: &[f64],
    steepness: &[f64],
    t_end: f64,
    samples: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    basis_table(family, weights, locations, shape, steepness, t_end, samples).map_err(js)
}

#[derive(Debug, Serialize)]
pub struct RegionCurves {
    pub times: Vec<f64>,
    pub aif: Vec<f64>,
    /// Blood-contaminated, noisy region curve as the scanner would see it.
    pub tac: Vec<f64>,
    /// Pure tissue response without blood or noise.
    pub tissue: Vec<f64>,
    pub fine_times: Vec<f64>,
    pub fine_aif: Vec<f64>,
    pub vt: f64,
}

/// One region on the default frame schedule with a randomly drawn input.
pub fn region_curves(seed: u64, k1: f64, k2: f64, fb: f64, noise: f64) -> Result<RegionCurves> {
    if !(0.0..1.0).contains(&fb) || noise < 0.0 {
        return Err(Error::Config("need 0 <= fb < 1 and noise >= 0".into()));
    }
    let grid = TimeGrid::standard();
    let mut rng = Rng::new(seed);
    let p = sample_feng(&mut rng, &SimRanges::default(), &grid)?;
    let (cp, aif) = gen_aif(&p, &grid, FINE_DT)?;
    let cr = metabolite_remainder(&cp, 0.015)?.sample(&grid);
    let tissue = tissue_response(&cp, k1, k2)?.sample(&grid);
    let durations = grid.durations();
    let tac = (0..grid.len())
        .map(|t| {
            let blood = 0.7 * aif.values[t] + 0.3 * cr.values[t];
            let clean = fb * blood + (1.0 - fb) * tissue.values[t];
            clean + noise / durations[t].sqrt() * rng.normal()
        })
        .collect();
    // thin the fine curve for plotting
    let stride = 10;
    Ok(RegionCurves {
        times: grid.midpoints(),
        aif: aif.values,
        tac,
        tissue: tissue.values,
        fine_times: (0..cp.values.len()).step_by(stride).map(|i| i as f64 * cp.dt).collect(),
        fine_aif: cp.values.iter().step_by(stride).copied().collect(),
        vt: k1 / k2,
    })
}

#[wasm_bindgen]
pub fn simulate_region(seed: u64, k1: f64, k2: f64, fb: f64, noise: f64) -> std::result::Result<String, JsError> {
    let r = region_curves(seed, k1, k2, fb, noise).map_err(js)?;
    Ok(serde_json::to_string(&r).expect("plain numbers serialize"))
}

#[derive(Debug, Serialize)]
pub struct LoganPlot {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Whether each point entered the fit (midpoint at or after t*).
    pub used: Vec<bool>,
    pub vt: f64,
    pub intercept: f64,
    pub true_vt: f64,
}

/// Logan coordinates of a simulated region curve against its true input.
pub fn logan_points(seed: u64, k1: f64, k2: f64, fb: f64, noise: f64, t_star: f64) -> Result<LoganPlot> {
    let r = region_curves(seed, k1, k2, fb, noise)?;
    let grid = TimeGrid::standard();
    let ct = SampledCurve::new(grid.clone(), r.tac.clone())?;
    let cp = SampledCurve::new(grid, r.aif.clone())?;
    let fit = logan_vt(&ct, &cp, t_star)?;
    let ict = cumulative_integral(&r.times, &r.tac);
    let icp = cumulative_integral(&r.times, &r.aif);
    let mut plot = LoganPlot {
        x: vec![],
        y: vec![],
        used: vec![],
        vt: fit.vt,
        intercept: fit.intercept,
        true_vt: r.vt,
    };
    for i in 0..r.times.len() {
        // early frames before any tissue signal have no Logan coordinates
        if r.tac[i] > 0.0 {
            plot.x.push(icp[i] / r.tac[i]);
            plot.y.push(ict[i] / r.tac[i]);
            plot.used.push(r.times[i] >= t_star);
        }
    }
    Ok(plot)
}

#[wasm_bindgen]
pub fn logan_plot(seed: u64, k1: f64, k2: f64, fb: f64, noise: f64, t_star: f64) -> std::result::Result<String, JsError> {
    let p = logan_points(seed, k1, k2, fb, noise, t_star).map_err(js)?;
    Ok(serde_json::to_string(&p).expect("plain numbers serialize"))
}
