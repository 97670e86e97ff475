//! Ellipsoidal brain phantoms rendered through the voxel mixture model
//! `I(t,q) = f_b(q)[α(q)c_p(t) + β(q)c_r(t)] + f_t(q)c_t(t)`.

use serde::{Deserialize, Serialize};

use super::curves::{gen_aif, metabolite_remainder, tissue_response, FengAif, FineCurve};
use crate::error::{Error, Result};
use crate::grid::{SampledCurve, TimeGrid};
use crate::rng::Rng;

pub const FINE_DT: f64 = 0.01;

/// `T × H × W × L` activity in SUV, t-major then z, y, x.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicVolume {
    pub grid: TimeGrid,
    /// `[H, W, L]`
    pub dims: [usize; 3],
    pub voxel_mm: f64,
    pub data: Vec<f64>,
    pub mask: Option<Vec<bool>>,
    pub seed: Option<u64>,
}

impl DynamicVolume {
    pub fn new(grid: TimeGrid, dims: [usize; 3], voxel_mm: f64, data: Vec<f64>) -> Result<Self> {
        let expected = grid.len() * dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::Shape {
                op: "DynamicVolume",
                lhs: vec![grid.len(), dims[0], dims[1], dims[2]],
                rhs: vec![data.len()],
            });
        }
        Ok(DynamicVolume {
            grid,
            dims,
            voxel_mm,
            data,
            mask: None,
            seed: None,
        })
    }

    pub fn frames(&self) -> usize {
        self.grid.len()
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    /// `[T, H, W, L]`
    pub fn shape4(&self) -> [usize; 4] {
        [self.frames(), self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.voxels();
        &self.data[t * n..(t + 1) * n]
    }

    /// Time course of voxel `v` (flat spatial index).
    pub fn voxel_curve(&self, v: usize) -> Vec<f64> {
        let n = self.voxels();
        (0..self.frames()).map(|t| self.data[t * n + v]).collect()
    }

    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    /// Mirrors the selected spatial axes (z, y, x); time is untouched.
    pub fn flipped(&self, axes: [bool; 3]) -> DynamicVolume {
        let [h, w, l] = self.dims;
        let n = self.voxels();
        let map = |z: usize, y: usize, x: usize| {
            let z = if axes[0] { h - 1 - z } else { z };
            let y = if axes[1] { w - 1 - y } else { y };
            let x = if axes[2] { l - 1 - x } else { x };
            (z * w + y) * l + x
        };
        let mut data = vec![0.0; self.data.len()];
        for t in 0..self.frames() {
            let src = &self.data[t * n..(t + 1) * n];
            let dst = &mut data[t * n..(t + 1) * n];
            for z in 0..h {
                for y in 0..w {
                    for x in 0..l {
                        dst[(z * w + y) * l + x] = src[map(z, y, x)];
                    }
                }
            }
        }
        let mask = self.mask.as_ref().map(|m| {
            let mut out = vec![false; n];
            for z in 0..h {
                for y in 0..w {
                    for x in 0..l {
                        out[(z * w + y) * l + x] = m[map(z, y, x)];
                    }
                }
            }
            out
        });
        DynamicVolume {
            grid: self.grid.clone(),
            dims: self.dims,
            voxel_mm: self.voxel_mm,
            data,
            mask,
            seed: self.seed,
        }
    }
}

/// Block-averages each spatial axis by 4.
pub fn downsample4(vol: &DynamicVolume) -> Result<DynamicVolume> {
    const F: usize = 4;
    let [h, w, l] = vol.dims;
    if h % F != 0 || w % F != 0 || l % F != 0 {
        return Err(Error::Config(format!(
            "dims {h}x{w}x{l} are not divisible by {F}"
        )));
    }
    let (oh, ow, ol) = (h / F, w / F, l / F);
    let on = oh * ow * ol;
    let n = vol.voxels();
    let mut data = vec![0.0; vol.frames() * on];
    let inv = 1.0 / (F * F * F) as f64;
    for t in 0..vol.frames() {
        let src = &vol.data[t * n..(t + 1) * n];
        let dst = &mut data[t * on..(t + 1) * on];
        for z in 0..h {
            for y in 0..w {
                for x in 0..l {
                    dst[((z / F) * ow + y / F) * ol + x / F] += src[(z * w + y) * l + x];
                }
            }
        }
        dst.iter_mut().for_each(|v| *v *= inv);
    }
    let mask = vol.mask.as_ref().map(|m| {
        let mut out = vec![false; on];
        for z in 0..h {
            for y in 0..w {
                for x in 0..l {
                    if m[(z * w + y) * l + x] {
                        out[((z / F) * ow + y / F) * ol + x / F] = true;
                    }
                }
            }
        }
        out
    });
    Ok(DynamicVolume {
        grid: vol.grid.clone(),
        dims: [oh, ow, ol],
        voxel_mm: vol.voxel_mm * F as f64,
        data,
        mask,
        seed: vol.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// Voxel coordinates (z, y, x).
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|i| ((p[i] - self.center[i]) / self.radii[i]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Per-region kinetic and blood-mixture parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    pub k1: f64,
    pub k2: f64,
    /// Whole-blood fraction; the tissue fraction is `1 − f_b`.
    pub fb: f64,
    /// Plasma share of the blood signal; the remainder share is `1 − α`.
    pub alpha: f64,
}

impl KineticParams {
    pub fn vt(&self) -> f64 {
        self.k1 / self.k2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cohort {
    #[serde(rename = "HAB-like")]
    Hab,
    #[serde(rename = "MAB-like")]
    Mab,
}

impl Cohort {
    pub fn label(self) -> &'static str {
        match self {
            Cohort::Hab => "HAB-like",
            Cohort::Mab => "MAB-like",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: Ellipsoid,
    pub kinetics: KineticParams,
}

/// Everything needed to render one subject. Later regions paint over earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub dims: [usize; 3],
    pub voxel_mm: f64,
    pub brain: Ellipsoid,
    /// Kinetics of brain voxels not covered by any region.
    pub background: KineticParams,
    pub regions: Vec<Region>,
    pub vessel: Option<Region>,
    pub aif: FengAif,
    /// Multiplies the plasma input (cohort amplitude).
    pub amplitude: f64,
    pub k_met: f64,
    pub cohort: Cohort,
}

/// Region label of every voxel: `None` outside the brain, `Some(0)` for the
/// background, `Some(i + 1)` for `regions[i]` and `Some(regions.len() + 1)`
/// for the vessel.
pub fn label_map(ph: &Phantom) -> Vec<Option<usize>> {
    let [h, w, l] = ph.dims;
    let mut out = Vec::with_capacity(h * w * l);
    for z in 0..h {
        for y in 0..w {
            for x in 0..l {
                let p = [z as f64 + 0.5, y as f64 + 0.5, x as f64 + 0.5];
                if !ph.brain.contains(p) {
                    out.push(None);
                    continue;
                }
                let mut lab = 0;
                for (i, r) in ph.regions.iter().enumerate() {
                    if r.shape.contains(p) {
                        lab = i + 1;
                    }
                }
                if let Some(v) = &ph.vessel {
                    if v.shape.contains(p) {
                        lab = ph.regions.len() + 1;
                    }
                }
                out.push(Some(lab));
            }
        }
    }
    out
}

impl Phantom {
    /// Kinetics by label, matching [`label_map`].
    pub fn kinetics_for(&self, label: usize) -> KineticParams {
        if label == 0 {
            self.background
        } else if label <= self.regions.len() {
            self.regions[label - 1].kinetics
        } else {
            self.vessel.as_ref().map(|v| v.kinetics).unwrap_or(self.background)
        }
    }
}

/// Noiseless blood and tissue curves of a phantom.
#[derive(Debug, Clone)]
pub struct PhantomCurves {
    pub cp: FineCurve,
    pub cr: FineCurve,
    /// One tissue curve per label.
    pub ct: Vec<FineCurve>,
}

pub fn phantom_curves(ph: &Phantom, grid: &TimeGrid) -> Result<PhantomCurves> {
    let (cp, _) = gen_aif(&ph.aif, grid, FINE_DT)?;
    let cp = cp.scaled(ph.amplitude);
    let cr = metabolite_remainder(&cp, ph.k_met)?;
    let labels = ph.regions.len() + 2;
    let ct = (0..labels)
        .map(|lab| {
            let k = ph.kinetics_for(lab);
            tissue_response(&cp, k.k1, k.k2)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhantomCurves { cp, cr, ct })
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub volume: DynamicVolume,
    /// Ground-truth plasma input at frame midpoints.
    pub aif: SampledCurve,
    pub curves: PhantomCurves,
    pub labels: Vec<Option<usize>>,
    /// True `K1/k2` per voxel (NaN outside the brain).
    pub vt_map: Vec<f64>,
}

/// Renders a phantom on `grid` and adds Gaussian noise with standard deviation
/// `noise_sigma / sqrt(frame duration)` inside the brain.
pub fn synth_volume(ph: &Phantom, grid: &TimeGrid, noise_sigma: f64, seed: u64) -> Result<SynthOutput> {
    let [h, w, l] = ph.dims;
    if h % 4 != 0 || w % 4 != 0 || l % 4 != 0 {
        return Err(Error::Config(format!("dims {h}x{w}x{l} must be divisible by 4")));
    }
    let curves = phantom_curves(ph, grid)?;
    let cp = curves.cp.sample(grid);
    let cr = curves.cr.sample(grid);
    let ct: Vec<SampledCurve> = curves.ct.iter().map(|c| c.sample(grid)).collect();
    let labels = label_map(ph);
    let nvox = h * w * l;
    let nt = grid.len();

    // one rendered curve per label, then scatter
    let per_label: Vec<Vec<f64>> = (0..ct.len())
        .map(|lab| {
            let k = ph.kinetics_for(lab);
            (0..nt)
                .map(|t| {
                    k.fb * (k.alpha * cp.values[t] + (1.0 - k.alpha) * cr.values[t])
                        + (1.0 - k.fb) * ct[lab].values[t]
                })
                .collect()
        })
        .collect();

    let mut data = vec![0.0; nt * nvox];
    let mut rng = Rng::new(seed);
    let durations = grid.durations();
    for t in 0..nt {
        let sd = noise_sigma / durations[t].sqrt();
        for (v, lab) in labels.iter().enumerate() {
            if let Some(lab) = lab {
                let mut val = per_label[*lab][t];
                if noise_sigma > 0.0 {
                    val += sd * rng.normal();
                }
                data[t * nvox + v] = val;
            }
        }
    }
    let vt_map = labels
        .iter()
        .map(|lab| match lab {
            Some(lab) => ph.kinetics_for(*lab).vt(),
            None => f64::NAN,
        })
        .collect();
    let mut volume = DynamicVolume::new(grid.clone(), ph.dims, ph.voxel_mm, data)?;
    volume.mask = Some(labels.iter().map(Option::is_some).collect());
    volume.seed = Some(seed);
    Ok(SynthOutput {
        volume,
        aif: cp,
        curves,
        labels,
        vt_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn simple_phantom(fb: f64, alpha: f64) -> Phantom {
        let k = KineticParams {
            k1: 0.1,
            k2: 0.05,
            fb,
            alpha,
        };
        Phantom {
            dims: [8, 8, 8],
            voxel_mm: 1.0,
            brain: Ellipsoid {
                center: [4.0, 4.0, 4.0],
                radii: [3.5, 3.5, 3.5],
            },
            background: k,
            regions: vec![Region {
                shape: Ellipsoid {
                    center: [4.0, 4.0, 4.0],
                    radii: [1.5, 1.5, 1.5],
                },
                kinetics: KineticParams { k1: 0.2, ..k },
            }],
            vessel: None,
            aif: FengAif {
                a1: 250.0,
                a2: 3.0,
                a3: 0.7,
                l1: 4.0,
                l2: 0.25,
                l3: 0.01,
                delay: 0.4,
            },
            amplitude: 1.0,
            k_met: 0.015,
            cohort: Cohort::Hab,
        }
    }

    #[test]
    fn tissue_only_voxels() {
        let grid = TimeGrid::standard();
        let ph = simple_phantom(0.0, 0.6);
        let out = synth_volume(&ph, &grid, 0.0, 1).unwrap();
        for (v, lab) in out.labels.iter().enumerate() {
            let curve = out.volume.voxel_curve(v);
            match lab {
                Some(lab) => {
                    let ct = out.curves.ct[*lab].sample(&grid);
                    assert_eq!(curve, ct.values);
                }
                None => assert!(curve.iter().all(|&x| x == 0.0)),
            }
        }
    }

    #[test]
    fn pure_plasma_voxels() {
        let grid = TimeGrid::standard();
        let ph = simple_phantom(1.0, 1.0);
        let out = synth_volume(&ph, &grid, 0.0, 1).unwrap();
        let v = out.volume.index(4, 4, 4);
        assert_eq!(out.volume.voxel_curve(v), out.aif.values);
    }

    #[test]
    fn mixture_reconstruction() {
        let grid = TimeGrid::standard();
        let ph = simple_phantom(0.3, 0.7);
        let out = synth_volume(&ph, &grid, 0.0, 1).unwrap();
        let cp = out.curves.cp.sample(&grid);
        let cr = out.curves.cr.sample(&grid);
        for (v, lab) in out.labels.iter().enumerate() {
            let Some(lab) = lab else { continue };
            let k = ph.kinetics_for(*lab);
            let ct = out.curves.ct[*lab].sample(&grid);
            for (t, val) in out.volume.voxel_curve(v).iter().enumerate() {
                let model = k.fb * (k.alpha * cp.values[t] + (1.0 - k.alpha) * cr.values[t])
                    + (1.0 - k.fb) * ct.values[t];
                assert!((val - model).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn noise_is_seeded() {
        let grid = TimeGrid::standard();
        let ph = simple_phantom(0.05, 0.6);
        let a = synth_volume(&ph, &grid, 0.05, 42).unwrap();
        let b = synth_volume(&ph, &grid, 0.05, 42).unwrap();
        let c = synth_volume(&ph, &grid, 0.05, 43).unwrap();
        assert_eq!(a.volume.data, b.volume.data);
        assert_ne!(a.volume.data, c.volume.data);
    }

    #[test]
    fn downsample_examples() {
        let grid = TimeGrid::uniform(2, 2.0).unwrap();
        let c = DynamicVolume::new(grid.clone(), [4, 8, 4], 1.0, vec![3.5; 2 * 128]).unwrap();
        let d = downsample4(&c).unwrap();
        assert_eq!(d.dims, [1, 2, 1]);
        assert!(d.data.iter().all(|&v| v == 3.5));

        let block: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let one = TimeGrid::uniform(1, 1.0).unwrap();
        let b = DynamicVolume::new(one, [4, 4, 4], 1.0, block).unwrap();
        assert_eq!(downsample4(&b).unwrap().data, vec![31.5]);

        let bad = DynamicVolume::new(grid, [6, 4, 4], 1.0, vec![0.0; 2 * 96]).unwrap();
        assert!(downsample4(&bad).is_err());
    }

    #[test]
    fn downsample_conserves_mass() {
        let grid = TimeGrid::uniform(3, 3.0).unwrap();
        let mut rng = Rng::new(5);
        let data: Vec<f64> = (0..3 * 8 * 8 * 8).map(|_| rng.uniform()).collect();
        let v = DynamicVolume::new(grid, [8, 8, 8], 1.0, data).unwrap();
        let d = downsample4(&v).unwrap();
        for t in 0..3 {
            let full: f64 = v.frame(t).iter().sum();
            let small: f64 = d.frame(t).iter().sum();
            assert!((full - 64.0 * small).abs() < 1e-10);
        }
    }

    #[test]
    fn flips_are_involutions() {
        let grid = TimeGrid::uniform(2, 2.0).unwrap();
        let mut rng = Rng::new(6);
        let data: Vec<f64> = (0..2 * 4 * 4 * 4).map(|_| rng.uniform()).collect();
        let v = DynamicVolume::new(grid, [4, 4, 4], 1.0, data).unwrap();
        assert_eq!(v.flipped([false; 3]), v);
        for axes in [[true, false, false], [false, true, false], [false, false, true]] {
            let f = v.flipped(axes);
            assert_ne!(f.data, v.data);
            assert_eq!(f.flipped(axes), v);
        }
    }
}
