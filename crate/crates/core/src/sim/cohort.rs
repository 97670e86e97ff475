//! Random subject generation.

use serde::{Deserialize, Serialize};

use super::curves::{gen_aif, FengAif};
use super::volume::{synth_volume, Cohort, Ellipsoid, KineticParams, Phantom, Region, SynthOutput, FINE_DT};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::Rng;

/// Uniform sampling ranges `[lo, hi]` for every simulated quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimRanges {
    pub k1: [f64; 2],
    pub k2: [f64; 2],
    pub fb_tissue: [f64; 2],
    pub fb_vessel: [f64; 2],
    pub alpha: [f64; 2],
    pub k_met: [f64; 2],
    pub a1: [f64; 2],
    pub a2: [f64; 2],
    pub a3: [f64; 2],
    pub l1: [f64; 2],
    pub l2: [f64; 2],
    pub l3: [f64; 2],
    pub delay: [f64; 2],
    /// Inclusive range for the number of ellipsoidal tissue regions.
    pub regions: [usize; 2],
    pub hab_scale: f64,
    pub mab_scale: f64,
}

impl Default for SimRanges {
    fn default() -> Self {
        SimRanges {
            k1: [0.05, 0.3],
            k2: [0.02, 0.15],
            fb_tissue: [0.02, 0.08],
            fb_vessel: [0.6, 0.9],
            alpha: [0.5, 0.8],
            k_met: [0.005, 0.03],
            a1: [35.0, 60.0],
            a2: [1.5, 4.0],
            a3: [0.4, 1.0],
            l1: [0.8, 1.5],
            l2: [0.15, 0.4],
            l3: [0.005, 0.015],
            delay: [0.2, 0.6],
            regions: [3, 6],
            hab_scale: 1.0,
            mab_scale: 0.7,
        }
    }
}

fn draw(rng: &mut Rng, r: [f64; 2]) -> f64 {
    rng.uniform_range(r[0], r[1])
}

fn tissue(rng: &mut Rng, ranges: &SimRanges) -> KineticParams {
    KineticParams {
        k1: draw(rng, ranges.k1),
        k2: draw(rng, ranges.k2),
        fb: draw(rng, ranges.fb_tissue),
        alpha: draw(rng, ranges.alpha),
    }
}

/// Draws a plasma input, resampling until it is non-negative on `grid`.
pub fn sample_feng(rng: &mut Rng, ranges: &SimRanges, grid: &TimeGrid) -> Result<FengAif> {
    for _ in 0..1000 {
        let p = FengAif {
            a1: draw(rng, ranges.a1),
            a2: draw(rng, ranges.a2),
            a3: draw(rng, ranges.a3),
            l1: draw(rng, ranges.l1),
            l2: draw(rng, ranges.l2),
            l3: draw(rng, ranges.l3),
            delay: draw(rng, ranges.delay),
        };
        if gen_aif(&p, grid, FINE_DT).is_ok() {
            return Ok(p);
        }
    }
    Err(Error::Config("input-function ranges never produce a non-negative curve".into()))
}

pub fn sample_phantom(
    rng: &mut Rng,
    ranges: &SimRanges,
    dims: [usize; 3],
    cohort: Cohort,
    grid: &TimeGrid,
) -> Result<Phantom> {
    if ranges.regions[0] > ranges.regions[1] {
        return Err(Error::Config("regions range is empty".into()));
    }
    let d = dims.map(|x| x as f64);
    let center = d.map(|x| x / 2.0);
    let brain = Ellipsoid {
        center,
        radii: d.map(|x| 0.42 * x),
    };
    let background = tissue(rng, ranges);
    let n_regions = ranges.regions[0] + rng.below(ranges.regions[1] - ranges.regions[0] + 1);
    let regions = (0..n_regions)
        .map(|_| {
            let mut c = [0.0; 3];
            let mut r = [0.0; 3];
            for i in 0..3 {
                c[i] = center[i] + rng.uniform_range(-0.2, 0.2) * d[i];
                r[i] = rng.uniform_range(0.08, 0.16) * d[i];
            }
            Region {
                shape: Ellipsoid { center: c, radii: r },
                kinetics: tissue(rng, ranges),
            }
        })
        .collect();
    // elongated vessel along z, off-centre in y/x
    let side = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
    let vessel = Region {
        shape: Ellipsoid {
            center: [
                center[0] + rng.uniform_range(-0.05, 0.05) * d[0],
                center[1] + side * rng.uniform_range(0.15, 0.25) * d[1],
                center[2] + rng.uniform_range(-0.1, 0.1) * d[2],
            ],
            radii: [0.3 * d[0], 0.1 * d[1], 0.1 * d[2]],
        },
        kinetics: KineticParams {
            fb: draw(rng, ranges.fb_vessel),
            alpha: draw(rng, ranges.alpha),
            ..background
        },
    };
    let aif = sample_feng(rng, ranges, grid)?;
    let k_met = draw(rng, ranges.k_met);
    let amplitude = match cohort {
        Cohort::Hab => ranges.hab_scale,
        Cohort::Mab => ranges.mab_scale,
    };
    Ok(Phantom {
        dims,
        voxel_mm: 1.0,
        brain,
        background,
        regions,
        vessel: Some(vessel),
        aif,
        amplitude,
        k_met,
        cohort,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub id: String,
    pub seed: u64,
    pub cohort: Cohort,
    pub phantom: Phantom,
}

/// Subject `i` uses seed `master_seed + i`; cohorts alternate HAB-like/MAB-like.
pub fn cohort_specs(
    n: usize,
    master_seed: u64,
    ranges: &SimRanges,
    dims: [usize; 3],
    grid: &TimeGrid,
) -> Result<Vec<SubjectSpec>> {
    (0..n)
        .map(|i| {
            let seed = master_seed.wrapping_add(i as u64);
            let cohort = if i % 2 == 0 { Cohort::Hab } else { Cohort::Mab };
            let mut rng = Rng::new(seed);
            let phantom = sample_phantom(&mut rng, ranges, dims, cohort, grid)?;
            Ok(SubjectSpec {
                id: format!("sub-{i:03}"),
                seed,
                cohort,
                phantom,
            })
        })
        .collect()
}

/// Renders a subject; the noise stream is derived from the subject seed.
pub fn render_subject(spec: &SubjectSpec, grid: &TimeGrid, noise_sigma: f64) -> Result<SynthOutput> {
    let noise_seed = Rng::derive(spec.seed, 1).next_u64();
    synth_volume(&spec.phantom, grid, noise_sigma, noise_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_are_reproducible() {
        let grid = TimeGrid::standard();
        let r = SimRanges::default();
        let a = cohort_specs(4, 42, &r, [32, 32, 32], &grid).unwrap();
        let b = cohort_specs(4, 42, &r, [32, 32, 32], &grid).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].cohort, Cohort::Hab);
        assert_eq!(a[1].cohort, Cohort::Mab);
        for s in &a {
            let n = s.phantom.regions.len();
            assert!((3..=6).contains(&n));
            for reg in &s.phantom.regions {
                let vt = reg.kinetics.vt();
                assert!(vt > 0.0);
            }
        }
    }

    #[test]
    fn default_peaks_are_early() {
        let grid = TimeGrid::standard();
        let r = SimRanges::default();
        let mut rng = Rng::new(9);
        for _ in 0..50 {
            let p = sample_feng(&mut rng, &r, &grid).unwrap();
            let (fine, _) = gen_aif(&p, &grid, FINE_DT).unwrap();
            let imax = fine
                .values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!((imax as f64) * FINE_DT < 5.0);
        }
    }

    #[test]
    fn rendered_volume_respects_noise_floor() {
        let grid = TimeGrid::standard();
        let specs = cohort_specs(1, 7, &SimRanges::default(), [32, 32, 32], &grid).unwrap();
        let sigma = 0.05;
        let out = render_subject(&specs[0], &grid, sigma).unwrap();
        let min_d = grid.durations().iter().cloned().fold(f64::MAX, f64::min);
        let floor = -5.0 * sigma / min_d.sqrt();
        assert!(out.volume.data.iter().all(|&v| v.is_finite() && v >= floor));
        assert_eq!(out.aif.values.len(), 30);
    }
}
