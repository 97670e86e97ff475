//! ICA decomposition baseline ("EPICA-style"): whiten the masked voxel
//! time-courses, unmix spatially independent sources with fixed-point ICA,
//! take the component that peaks first as the plasma curve and scale it to a
//! reference peak.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SampledCurve;
use crate::rng::Rng;
use crate::sim::DynamicVolume;

/// Eigenvalues below this fraction of the largest are discarded.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcaConfig {
    pub n_components: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        IcaConfig {
            n_components: 3,
            max_iter: 500,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Whitened data `z = transform · x̃` where `x̃` is the doubly centered input.
#[derive(Debug, Clone)]
pub struct Whitened {
    /// `[r × V]`, unit covariance over voxels.
    pub z: DMatrix<f64>,
    /// `[r × T]`.
    pub transform: DMatrix<f64>,
    /// `[T × r]`, maps whitened directions back to time courses.
    pub dewhiten: DMatrix<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Centers each voxel's time course (column) and each frame (row), then
/// decorrelates the frames with the eigendecomposition of the `T × T`
/// covariance.
pub fn whiten(x: &DMatrix<f64>) -> Result<Whitened> {
    let (t, v) = x.shape();
    if v < t {
        return Err(Error::domain("whiten", format!("{v} voxels for {t} frames; need V ≥ T")));
    }
    if x.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("whiten input".into()));
    }
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    for mut row in xc.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    let cov = &xc * xc.transpose() / v as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| lmax > 0.0 && eig.eigenvalues[i] > RANK_TOL * lmax)
        .collect();
    if keep.len() < 2 {
        return Err(Error::domain("whiten", format!("data rank {} < 2", keep.len())));
    }
    let r = keep.len();
    let mut transform = DMatrix::zeros(r, t);
    let mut dewhiten = DMatrix::zeros(t, r);
    for (k, &i) in keep.iter().enumerate() {
        let l = eig.eigenvalues[i];
        let e = eig.eigenvectors.column(i);
        for j in 0..t {
            transform[(k, j)] = e[j] / l.sqrt();
            dewhiten[(j, k)] = e[j] * l.sqrt();
        }
    }
    Ok(Whitened {
        z: &transform * xc,
        transform,
        dewhiten,
        eigenvalues: keep.iter().map(|&i| eig.eigenvalues[i]).collect(),
    })
}

/// `(W Wᵀ)^{-1/2} W`.
fn sym_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose() * w
}

#[derive(Debug, Clone)]
pub struct IcaResult {
    /// Unmixing rows in whitened space, `[n × r]`.
    pub unmixing: DMatrix<f64>,
    /// Spatial sources `[n × V]`.
    pub sources: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Symmetric fixed-point ICA with the log-cosh contrast. Non-convergence is
/// reported through `converged` and the last iterate is returned.
pub fn fast_ica(w: &Whitened, cfg: &IcaConfig) -> Result<IcaResult> {
    let (r, v) = w.z.shape();
    let n = cfg.n_components;
    if n == 0 || n > r {
        return Err(Error::domain(
            "fast_ica",
            format!("{n} components requested, retained rank is {r}"),
        ));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut wm = DMatrix::from_fn(n, r, |_, _| rng.normal());
    wm = sym_decorrelate(&wm);
    let z = &w.z;
    let mut converged = false;
    let mut it = 0;
    while it < cfg.max_iter {
        it += 1;
        let u = &wm * z;
        let gu = u.map(f64::tanh);
        let mean_dg = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            gu.row_iter().map(|row| row.iter().map(|g| 1.0 - g * g).sum::<f64>() / v as f64),
        ));
        let next = sym_decorrelate(&(&gu * z.transpose() / v as f64 - mean_dg * &wm));
        let delta = (&next * wm.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        wm = next;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    let sources = &wm * z;
    Ok(IcaResult {
        unmixing: wm,
        sources,
        iterations: it,
        converged,
    })
}

/// Time course of every source, by regressing the uncentered data `x` onto
/// the (unit-variance, centered) spatial sources. `[T × n]`.
pub fn component_curves(x: &DMatrix<f64>, ica: &IcaResult) -> DMatrix<f64> {
    x * ica.sources.transpose() / x.ncols() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpicaResult {
    /// Sign-fixed component curves, one per component.
    pub components: Vec<Vec<f64>>,
    pub selected: usize,
    /// Selected curve before scaling.
    pub uncalibrated: Vec<f64>,
    pub scaled: Vec<f64>,
    /// Whether the time-to-peak was tied and broken by peak-to-tail ratio.
    pub tie: bool,
}

fn sign_fixed(c: &[f64]) -> Vec<f64> {
    let max = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
    if -min > max {
        c.iter().map(|v| -v).collect()
    } else {
        c.to_vec()
    }
}

fn argmax(c: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in c.iter().enumerate() {
        if *v > c[best] {
            best = i;
        }
    }
    best
}

/// Peak over the mean of the final third of frames.
fn peak_to_tail(c: &[f64]) -> f64 {
    let tail = &c[c.len() - (c.len() / 3).max(1)..];
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    c[argmax(c)] / m.abs().max(f64::MIN_POSITIVE)
}

/// Picks the earliest-peaking component and scales its maximum to `reference_peak`.
pub fn select_and_scale(components: &[Vec<f64>], reference_peak: f64) -> Result<EpicaResult> {
    if !(reference_peak > 0.0) {
        return Err(Error::domain("select_and_scale", "reference peak must be positive"));
    }
    if components.is_empty() {
        return Err(Error::domain("select_and_scale", "no components"));
    }
    let fixed: Vec<Vec<f64>> = components.iter().map(|c| sign_fixed(c)).collect();
    let ttp: Vec<usize> = fixed.iter().map(|c| argmax(c)).collect();
    let earliest = *ttp.iter().min().expect("non-empty");
    let tied: Vec<usize> = (0..fixed.len()).filter(|&i| ttp[i] == earliest).collect();
    let selected = *tied
        .iter()
        .max_by(|&&a, &&b| peak_to_tail(&fixed[a]).total_cmp(&peak_to_tail(&fixed[b])))
        .expect("non-empty");
    let unc = fixed[selected].clone();
    let peak = unc[argmax(&unc)];
    if !(peak > 0.0) {
        return Err(Error::domain("select_and_scale", "selected component has no positive peak"));
    }
    let scaled = unc.iter().map(|v| v * (reference_peak / peak)).collect();
    Ok(EpicaResult {
        components: fixed,
        selected,
        uncalibrated: unc,
        scaled,
        tie: tied.len() > 1,
    })
}

/// `[T × V]` matrix of the voxel curves selected by `mask`.
pub fn masked_matrix(vol: &DynamicVolume, mask: &[bool]) -> Result<DMatrix<f64>> {
    if mask.len() != vol.voxels() {
        return Err(Error::Shape {
            op: "masked_matrix",
            lhs: vol.dims.to_vec(),
            rhs: vec![mask.len()],
        });
    }
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let n = vol.voxels();
    Ok(DMatrix::from_fn(vol.frames(), idx.len(), |t, j| vol.data[t * n + idx[j]]))
}

/// Full pipeline on a volume: masked voxels, decomposition, selection and
/// peak scaling against the reference input function.
pub fn epica(vol: &DynamicVolume, mask: &[bool], reference: &SampledCurve, cfg: &IcaConfig) -> Result<EpicaResult> {
    if vol.grid != reference.grid {
        return Err(Error::GridMismatch("volume and reference curve grids differ".into()));
    }
    let x = masked_matrix(vol, mask)?;
    let w = whiten(&x)?;
    let ica = fast_ica(&w, cfg)?;
    let curves = component_curves(&x, &ica);
    let comps: Vec<Vec<f64>> = curves.column_iter().map(|c| c.iter().copied().collect()).collect();
    select_and_scale(&comps, reference.peak())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::pearson;

    fn two_source(v: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
        let t = 30;
        let cp: Vec<f64> = (0..t).map(|i| {
            let x = i as f64 * 0.5;
            10.0 * x * (-1.5 * x).exp() + 0.3 * (-0.02 * x).exp()
        }).collect();
        let ct: Vec<f64> = (0..t).map(|i| 1.0 - (-(i as f64) * 0.15).exp()).collect();
        let mut rng = Rng::new(seed);
        // exponential loadings: non-Gaussian, non-negative
        let a: Vec<f64> = (0..v).map(|_| -rng.uniform().max(1e-12).ln()).collect();
        let b: Vec<f64> = (0..v).map(|_| -rng.uniform().max(1e-12).ln()).collect();
        let x = DMatrix::from_fn(t, v, |i, j| a[j] * cp[i] + b[j] * ct[i]);
        (x, cp, ct)
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let (x, _, _) = two_source(500, 1);
        let w = whiten(&x).unwrap();
        assert_eq!(w.eigenvalues.len(), 2);
        let c = &w.z * w.z.transpose() / 500.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((c[(i, j)] - e).abs() < 1e-8, "{c}");
            }
        }
    }

    #[test]
    fn duplicated_columns_whiten_alike() {
        let (x, _, _) = two_source(200, 2);
        let mut dup = DMatrix::zeros(x.nrows(), 400);
        for j in 0..200 {
            dup.set_column(2 * j, &x.column(j));
            dup.set_column(2 * j + 1, &x.column(j));
        }
        let a = whiten(&x).unwrap();
        let b = whiten(&dup).unwrap();
        for (p, q) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((p - q).abs() < 1e-9 * p.abs().max(1.0));
        }
    }

    #[test]
    fn constant_input_is_rank_error() {
        let x = DMatrix::from_element(5, 20, 3.0);
        assert!(whiten(&x).unwrap_err().to_string().contains("rank"));
    }

    #[test]
    fn unmixes_two_sources() {
        let (x, cp, ct) = two_source(2000, 3);
        let w = whiten(&x).unwrap();
        let cfg = IcaConfig {
            n_components: 2,
            ..Default::default()
        };
        let ica = fast_ica(&w, &cfg).unwrap();
        assert!(ica.converged);
        let curves = component_curves(&x, &ica);
        for truth in [&cp, &ct] {
            let best = curves
                .column_iter()
                .map(|c| pearson(&c.iter().copied().collect::<Vec<_>>(), truth).unwrap().abs())
                .fold(0.0, f64::max);
            assert!(best > 0.99, "{best}");
        }
        let comps: Vec<Vec<f64>> = curves.column_iter().map(|c| c.iter().copied().collect()).collect();
        let res = select_and_scale(&comps, 7.0).unwrap();
        assert!(pearson(&res.scaled, &cp).unwrap() > 0.99);
        assert_eq!(res.scaled.iter().cloned().fold(f64::MIN, f64::max), 7.0);
    }

    #[test]
    fn selection_is_sign_invariant() {
        let a = vec![0.0, 5.0, 2.0, 1.0];
        let b = vec![0.0, 1.0, 2.0, 3.0];
        let r1 = select_and_scale(&[a.clone(), b.clone()], 2.0).unwrap();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let r2 = select_and_scale(&[neg, b], 2.0).unwrap();
        assert_eq!(r1.selected, 0);
        assert_eq!(r1.scaled, r2.scaled);
        assert!(select_and_scale(&[a], 0.0).is_err());
    }

    #[test]
    fn tie_prefers_peaky_component() {
        let flat = vec![0.0, 2.0, 1.9, 1.9];
        let peaky = vec![0.0, 2.0, 0.5, 0.2];
        let r = select_and_scale(&[flat, peaky], 1.0).unwrap();
        assert!(r.tie);
        assert_eq!(r.selected, 1);
    }
}
