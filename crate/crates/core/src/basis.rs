//! Continuous input-function representation by superposed basis functions.
//!
//! Two families are supported: normalized Gaussians and sigmoid-gated
//! exponential bumps. Both have a closed-form evaluator on plain `f64`s and a
//! graph builder used during training; the two are kept separate so tests can
//! check one against the other.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SampledCurve, TimeGrid};
use crate::tensor::{Graph, Tensor, Var};

/// Floor added after the ReLU on every scale parameter.
pub const SCALE_EPS: f64 = 1e-3;

/// `relu(raw) + eps`.
pub fn activate_scale(raw: f64) -> f64 {
    raw.max(0.0) + SCALE_EPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    #[serde(rename = "expsig")]
    ExpSigmoid,
    Direct,
}

impl Family {
    /// Columns of the per-function parameter matrix.
    pub fn arity(self) -> usize {
        match self {
            Family::Gaussian => 3,
            Family::ExpSigmoid => 4,
            Family::Direct => 1,
        }
    }
}

/// `(ω_k, μ_k, σ_k)` with `σ_k` already activated.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub weights: Vec<f64>,
    pub locations: Vec<f64>,
    pub scales: Vec<f64>,
}

/// `(ω_k, λ_k, γ_k, η_k)` with `λ_k` already activated.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSigmoidParams {
    pub weights: Vec<f64>,
    pub rates: Vec<f64>,
    pub centers: Vec<f64>,
    pub steepness: Vec<f64>,
}

pub fn eval_gaussian(p: &GaussianParams, t: f64) -> f64 {
    let norm = (2.0 * PI).sqrt();
    p.weights
        .iter()
        .zip(&p.locations)
        .zip(&p.scales)
        .map(|((w, mu), s)| {
            let z = (t - mu) / s;
            w / (s * norm) * (-0.5 * z * z).exp()
        })
        .sum()
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn eval_expsig(p: &ExpSigmoidParams, t: f64) -> f64 {
    p.weights
        .iter()
        .zip(&p.rates)
        .zip(&p.centers)
        .zip(&p.steepness)
        .map(|(((w, lam), c), eta)| {
            let d = t - c;
            w * lam * (-lam * d * d).exp() * stable_sigmoid(eta * d)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum AifParams {
    Gaussian(GaussianParams),
    ExpSigmoid(ExpSigmoidParams),
    /// One value per frame; not continuous.
    Direct(Vec<f64>),
}

impl AifParams {
    pub fn family(&self) -> Family {
        match self {
            AifParams::Gaussian(_) => Family::Gaussian,
            AifParams::ExpSigmoid(_) => Family::ExpSigmoid,
            AifParams::Direct(_) => Family::Direct,
        }
    }

    /// Basis weights ω (empty for direct values).
    pub fn weights(&self) -> &[f64] {
        match self {
            AifParams::Gaussian(p) => &p.weights,
            AifParams::ExpSigmoid(p) => &p.weights,
            AifParams::Direct(_) => &[],
        }
    }
}

/// An input function estimate, optionally multiplied by a global amplitude α.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledAif {
    pub params: AifParams,
    pub alpha: Option<f64>,
}

impl ScaledAif {
    /// Continuous value at `t` minutes; `None` for direct estimates.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let base = match &self.params {
            AifParams::Gaussian(p) => eval_gaussian(p, t),
            AifParams::ExpSigmoid(p) => eval_expsig(p, t),
            AifParams::Direct(_) => return None,
        };
        Some(match self.alpha {
            Some(a) => a * base,
            None => base,
        })
    }

    /// Individual basis terms at `t` (unscaled), for plotting compositions.
    pub fn components(&self, t: f64) -> Vec<f64> {
        match &self.params {
            AifParams::Gaussian(p) => (0..p.weights.len())
                .map(|k| {
                    eval_gaussian(
                        &GaussianParams {
                            weights: vec![p.weights[k]],
                            locations: vec![p.locations[k]],
                            scales: vec![p.scales[k]],
                        },
                        t,
                    )
                })
                .collect(),
            AifParams::ExpSigmoid(p) => (0..p.weights.len())
                .map(|k| {
                    eval_expsig(
                        &ExpSigmoidParams {
                            weights: vec![p.weights[k]],
                            rates: vec![p.rates[k]],
                            centers: vec![p.centers[k]],
                            steepness: vec![p.steepness[k]],
                        },
                        t,
                    )
                })
                .collect(),
            AifParams::Direct(_) => Vec::new(),
        }
    }
}

/// Evaluates at frame midpoints, applying α last.
pub fn sample_on_grid(aif: &ScaledAif, grid: &TimeGrid) -> Result<SampledCurve> {
    let values = match &aif.params {
        AifParams::Direct(v) => {
            if v.len() != grid.len() {
                return Err(Error::GridMismatch(format!(
                    "direct estimate has {} values for {} frames",
                    v.len(),
                    grid.len()
                )));
            }
            match aif.alpha {
                Some(a) => v.iter().map(|x| a * x).collect(),
                None => v.clone(),
            }
        }
        AifParams::Gaussian(p) => scale_all(grid.midpoints().iter().map(|&t| eval_gaussian(p, t)), aif.alpha),
        AifParams::ExpSigmoid(p) => scale_all(grid.midpoints().iter().map(|&t| eval_expsig(p, t)), aif.alpha),
    };
    SampledCurve::new(grid.clone(), values)
}

fn scale_all(it: impl Iterator<Item = f64>, alpha: Option<f64>) -> Vec<f64> {
    match alpha {
        Some(a) => it.map(|v| a * v).collect(),
        None => it.collect(),
    }
}

/// Mean absolute difference between two curves on the same grid.
pub fn l1_similarity(dlif: &SampledCurve, aif: &SampledCurve) -> Result<f64> {
    dlif.ensure_same_grid(aif)?;
    let n = dlif.len() as f64;
    Ok(dlif
        .values
        .iter()
        .zip(&aif.values)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// Mean absolute basis weight.
pub fn sparsity_penalty(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::domain("sparsity_penalty", "needs at least one weight"));
    }
    Ok(weights.iter().map(|w| w.abs()).sum::<f64>() / weights.len() as f64)
}

/// Number of weights with |ω| above `frac` of the largest |ω|.
pub fn active_count(weights: &[f64], frac: f64) -> usize {
    let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max == 0.0 {
        return 0;
    }
    weights.iter().filter(|w| w.abs() > frac * max).count()
}

/// Least-squares fit of one Gaussian per frame, centred on the midpoints with
/// width `scale`. With a narrow width the design matrix is near-diagonal and
/// the fit interpolates the samples.
pub fn fit_gaussians_at_midpoints(curve: &SampledCurve, scale: f64) -> Result<GaussianParams> {
    let mids = curve.grid.midpoints();
    let n = mids.len();
    let norm = (2.0 * PI).sqrt();
    let phi = DMatrix::from_fn(n, n, |i, k| {
        let z = (mids[i] - mids[k]) / scale;
        (-0.5 * z * z).exp() / (scale * norm)
    });
    let y = DVector::from_column_slice(&curve.values);
    let w = phi
        .svd(true, true)
        .solve(&y, 1e-300)
        .map_err(|e| Error::Numeric(format!("least squares: {e}")))?;
    Ok(GaussianParams {
        weights: w.iter().copied().collect(),
        locations: mids,
        scales: vec![scale; n],
    })
}

// ---------------------------------------------------------------------------
// Graph builders

/// Broadcasts a `[K, 1]` column across `t` columns as `[K, t]`.
fn spread(g: &mut Graph, col: Var, ones_row: Var) -> Result<Var> {
    g.matmul(col, ones_row)
}

/// Sum of Gaussians sampled at `times`. Each argument is a `[K, 1]` column;
/// `scales` must already be activated. Returns `[T]`.
pub fn gaussian_curve(g: &mut Graph, weights: Var, locations: Var, scales: Var, times: &[f64]) -> Result<Var> {
    let nt = times.len();
    let ones = g.constant(Tensor::full([1, nt], 1.0));
    let t = g.constant(Tensor::vector(times.to_vec()));
    let mu = spread(g, locations, ones)?;
    let d = g.sub(mu, t)?;
    let sig = spread(g, scales, ones)?;
    let z = g.div(d, sig)?;
    let z2 = g.square(z)?;
    let arg = g.mul_scalar(z2, -0.5)?;
    let e = g.exp(arg)?;
    let denom = g.mul_scalar(scales, (2.0 * PI).sqrt())?;
    let amp = g.div(weights, denom)?;
    let amp = spread(g, amp, ones)?;
    let terms = g.mul(e, amp)?;
    g.sum_axis(terms, 0)
}

/// Sum of sigmoid-gated exponentials sampled at `times`; `[K, 1]` columns in,
/// `[T]` out. `rates` must already be activated.
pub fn expsig_curve(
    g: &mut Graph,
    weights: Var,
    rates: Var,
    centers: Var,
    steepness: Var,
    times: &[f64],
) -> Result<Var> {
    let nt = times.len();
    let ones = g.constant(Tensor::full([1, nt], 1.0));
    let t = g.constant(Tensor::vector(times.to_vec()));
    let c = spread(g, centers, ones)?;
    let nd = g.sub(c, t)?; // γ - t
    let lam = spread(g, rates, ones)?;
    let d2 = g.square(nd)?;
    let arg = g.mul(lam, d2)?;
    let arg = g.neg(arg)?;
    let e = g.exp(arg)?;
    let eta = spread(g, steepness, ones)?;
    let gate_arg = g.mul(eta, nd)?;
    let gate_arg = g.neg(gate_arg)?;
    let gate = g.sigmoid(gate_arg)?;
    let wl = g.mul(weights, rates)?;
    let wl = spread(g, wl, ones)?;
    let terms = g.mul(e, gate)?;
    let terms = g.mul(terms, wl)?;
    g.sum_axis(terms, 0)
}

/// `relu(raw) + eps` on the graph.
pub fn activate_scale_graph(g: &mut Graph, raw: Var) -> Result<Var> {
    let r = g.relu(raw)?;
    g.add_scalar(r, SCALE_EPS)
}

/// Mean absolute difference between a predicted `[T]` node and a fixed target.
pub fn l1_loss_graph(g: &mut Graph, pred: Var, target: &[f64]) -> Result<Var> {
    if g.shape(pred) != [target.len()] {
        return Err(Error::GridMismatch(format!(
            "prediction shape {:?} vs {} target frames",
            g.shape(pred),
            target.len()
        )));
    }
    let y = g.constant(Tensor::vector(target.to_vec()));
    let d = g.sub(pred, y)?;
    let a = g.abs(d)?;
    g.mean(a)
}

pub fn sparsity_graph(g: &mut Graph, weights: Var) -> Result<Var> {
    let a = g.abs(weights)?;
    g.mean(a)
}

// ---------------------------------------------------------------------------
// JSON form: {"family": ..., "alpha": ..., "params": [[...], ...]}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaledAifJson {
    family: Family,
    alpha: Option<f64>,
    params: Vec<Vec<f64>>,
}

impl Serialize for ScaledAif {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let params = match &self.params {
            AifParams::Gaussian(p) => (0..p.weights.len())
                .map(|k| vec![p.weights[k], p.locations[k], p.scales[k]])
                .collect(),
            AifParams::ExpSigmoid(p) => (0..p.weights.len())
                .map(|k| vec![p.weights[k], p.rates[k], p.centers[k], p.steepness[k]])
                .collect(),
            AifParams::Direct(v) => v.iter().map(|&x| vec![x]).collect(),
        };
        ScaledAifJson {
            family: self.params.family(),
            alpha: self.alpha,
            params,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScaledAif {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = ScaledAifJson::deserialize(d)?;
        let arity = raw.family.arity();
        if let Some(bad) = raw.params.iter().find(|r| r.len() != arity) {
            return Err(D::Error::custom(format!(
                "expected {arity} values per basis function, got {}",
                bad.len()
            )));
        }
        let col = |i: usize| raw.params.iter().map(|r| r[i]).collect::<Vec<_>>();
        let params = match raw.family {
            Family::Gaussian => AifParams::Gaussian(GaussianParams {
                weights: col(0),
                locations: col(1),
                scales: col(2),
            }),
            Family::ExpSigmoid => AifParams::ExpSigmoid(ExpSigmoidParams {
                weights: col(0),
                rates: col(1),
                centers: col(2),
                steepness: col(3),
            }),
            Family::Direct => AifParams::Direct(col(0)),
        };
        Ok(ScaledAif {
            params,
            alpha: raw.alpha,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check_inputs, GradCheckOptions};

    fn single_gauss(w: f64, mu: f64, s: f64) -> GaussianParams {
        GaussianParams {
            weights: vec![w],
            locations: vec![mu],
            scales: vec![s],
        }
    }

    #[test]
    fn gaussian_peak_value() {
        let v = eval_gaussian(&single_gauss(1.0, 0.0, 1.0), 0.0);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_vanish() {
        let g = GaussianParams {
            weights: vec![0.0; 3],
            locations: vec![0.0, 1.0, 2.0],
            scales: vec![1.0; 3],
        };
        let e = ExpSigmoidParams {
            weights: vec![0.0; 2],
            rates: vec![1.0; 2],
            centers: vec![0.0, 5.0],
            steepness: vec![1.0; 2],
        };
        for t in [-5.0, 0.0, 3.3, 80.0] {
            assert_eq!(eval_gaussian(&g, t), 0.0);
            assert_eq!(eval_expsig(&e, t), 0.0);
        }
    }

    #[test]
    fn symmetric_gaussian_pair() {
        let pair = GaussianParams {
            weights: vec![1.0, 1.0],
            locations: vec![-1.0, 1.0],
            scales: vec![1.0, 1.0],
        };
        let single = eval_gaussian(&single_gauss(1.0, 0.0, 1.0), 1.0);
        assert!((eval_gaussian(&pair, 0.0) - 2.0 * single).abs() < 1e-15);
    }

    #[test]
    fn expsig_at_center_is_half_amplitude() {
        let p = ExpSigmoidParams {
            weights: vec![2.0],
            rates: vec![1.0],
            centers: vec![0.0],
            steepness: vec![1.0],
        };
        assert_eq!(eval_expsig(&p, 0.0), 1.0);
    }

    #[test]
    fn expsig_steep_gate_underflows_before_center() {
        let p = ExpSigmoidParams {
            weights: vec![1.0],
            rates: vec![1.0],
            centers: vec![0.0],
            steepness: vec![1e3],
        };
        let v = eval_expsig(&p, -1.0);
        assert!(v < 1e-300);
    }

    #[test]
    fn alpha_scales_every_sample() {
        let p = AifParams::Gaussian(GaussianParams {
            weights: vec![3.0, 1.0],
            locations: vec![1.0, 20.0],
            scales: vec![0.7, 15.0],
        });
        let grid = TimeGrid::standard();
        let one = sample_on_grid(&ScaledAif { params: p.clone(), alpha: Some(1.0) }, &grid).unwrap();
        let none = sample_on_grid(&ScaledAif { params: p.clone(), alpha: None }, &grid).unwrap();
        let two = sample_on_grid(&ScaledAif { params: p, alpha: Some(2.0) }, &grid).unwrap();
        assert_eq!(one.values, none.values);
        for (a, b) in one.values.iter().zip(&two.values) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn l1_examples() {
        let grid = TimeGrid::uniform(2, 2.0).unwrap();
        let a = SampledCurve::new(grid.clone(), vec![0.0, 2.0]).unwrap();
        let b = SampledCurve::new(grid.clone(), vec![1.0, 1.0]).unwrap();
        assert_eq!(l1_similarity(&a, &b).unwrap(), 1.0);
        assert_eq!(l1_similarity(&a, &a).unwrap(), 0.0);
        let c = SampledCurve::new(grid, vec![1.0, 3.0]).unwrap();
        assert_eq!(l1_similarity(&c, &a).unwrap(), 1.0);
        let other = SampledCurve::new(TimeGrid::uniform(2, 4.0).unwrap(), vec![0.0, 0.0]).unwrap();
        assert!(l1_similarity(&a, &other).is_err());
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity_penalty(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((sparsity_penalty(&[1.0, -1.0, 2.0]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let w = [0.5, -2.0, 1.25];
        let base = sparsity_penalty(&w).unwrap();
        let scaled: Vec<f64> = w.iter().map(|x| -3.0 * x).collect();
        assert!((sparsity_penalty(&scaled).unwrap() - 3.0 * base).abs() < 1e-14);
        assert!(sparsity_penalty(&[]).is_err());
    }

    #[test]
    fn scale_activation_floor() {
        for raw in [-10.0, -1e-9, 0.0, 1e-9, 3.0] {
            assert!(activate_scale(raw) >= SCALE_EPS);
        }
    }

    #[test]
    fn graph_curves_match_closed_form() {
        let times = TimeGrid::standard().midpoints();
        let gp = GaussianParams {
            weights: vec![5.0, -1.0, 2.0],
            locations: vec![0.8, 10.0, 40.0],
            scales: vec![0.5, 4.0, 30.0],
        };
        let ep = ExpSigmoidParams {
            weights: vec![4.0, 30.0],
            rates: vec![1.3, 0.002],
            centers: vec![0.6, 5.0],
            steepness: vec![8.0, 0.3],
        };
        let mut g = Graph::new();
        let col = |g: &mut Graph, v: &[f64]| g.constant(Tensor::new([v.len(), 1], v.to_vec()).unwrap());
        let (w, m, s) = (col(&mut g, &gp.weights), col(&mut g, &gp.locations), col(&mut g, &gp.scales));
        let gc = gaussian_curve(&mut g, w, m, s, &times).unwrap();
        let (w, r, c, e) = (
            col(&mut g, &ep.weights),
            col(&mut g, &ep.rates),
            col(&mut g, &ep.centers),
            col(&mut g, &ep.steepness),
        );
        let ec = expsig_curve(&mut g, w, r, c, e, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            assert!((g.value(gc)[i] - eval_gaussian(&gp, t)).abs() < 1e-12);
            assert!((g.value(ec)[i] - eval_expsig(&ep, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_loss_gradients() {
        let times = TimeGrid::standard().midpoints();
        let target: Vec<f64> = times.iter().map(|t| 10.0 * (-t / 5.0f64).exp() + 0.3).collect();
        let k = 4;
        let raw = Tensor::new(
            [k, 4],
            vec![
                3.0, 0.9, 0.7, 4.0, //
                1.0, 0.3, 6.0, 1.0, //
                20.0, 0.05, 20.0, 0.5, //
                -2.0, 0.2, 50.0, 2.0,
            ],
        )
        .unwrap();
        let opts = GradCheckOptions {
            eps: 1e-6,
            ..Default::default()
        };
        let err = grad_check_inputs(
            |g, xs| {
                let w = g.slice(xs[0], 1, 0, 1)?;
                let r = g.slice(xs[0], 1, 1, 2)?;
                let r = activate_scale_graph(g, r)?;
                let c = g.slice(xs[0], 1, 2, 3)?;
                let e = g.slice(xs[0], 1, 3, 4)?;
                let curve = expsig_curve(g, w, r, c, e, &times)?;
                let l = l1_loss_graph(g, curve, &target)?;
                let wv = g.reshape(w, &[k])?;
                let sp = sparsity_graph(g, wv)?;
                let sp = g.mul_scalar(sp, 0.01)?;
                g.add(l, sp)
            },
            &[raw],
            &opts,
        )
        .unwrap();
        assert!(err < 1e-5, "expsig {err}");

        let raw = Tensor::new(
            [3, 3],
            vec![
                4.0, 0.8, 0.6, //
                10.0, 8.0, 5.0, //
                30.0, 50.0, 40.0,
            ],
        )
        .unwrap();
        let err = grad_check_inputs(
            |g, xs| {
                let w = g.slice(xs[0], 1, 0, 1)?;
                let m = g.slice(xs[0], 1, 1, 2)?;
                let s = g.slice(xs[0], 1, 2, 3)?;
                let s = activate_scale_graph(g, s)?;
                let curve = gaussian_curve(g, w, m, s, &times)?;
                let l = l1_loss_graph(g, curve, &target)?;
                let wv = g.reshape(w, &[3])?;
                let sp = sparsity_graph(g, wv)?;
                let sp = g.mul_scalar(sp, 0.01)?;
                g.add(l, sp)
            },
            &[raw],
            &opts,
        )
        .unwrap();
        assert!(err < 1e-5, "gaussian {err}");
    }

    #[test]
    fn json_shape() {
        let a = ScaledAif {
            params: AifParams::ExpSigmoid(ExpSigmoidParams {
                weights: vec![1.0],
                rates: vec![0.5],
                centers: vec![1.0],
                steepness: vec![3.0],
            }),
            alpha: Some(1.5),
        };
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        assert_eq!(v["family"], "expsig");
        assert_eq!(v["alpha"], 1.5);
        assert_eq!(v["params"][0].as_array().unwrap().len(), 4);
        let back: ScaledAif = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
        let bad = serde_json::json!({"family": "gaussian", "alpha": null, "params": [[1.0, 2.0]]});
        assert!(serde_json::from_value::<ScaledAif>(bad).is_err());
    }
}
