//! On-disk layout of a simulated cohort: one `.dpt` volume, mask and true
//! V_T map plus an input-function CSV per subject, indexed by `subjects.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{read_json, write_json};
use super::curve_csv::{read_curve, write_curve};
use super::dpt::{map_volume, read_dpt, read_map, write_dpt};
use crate::error::{Error, Result};
use crate::sim::{downsample4, DynamicVolume, SubjectSpec, SynthOutput};
use crate::trainer::Sample;

pub const COHORT_INDEX: &str = "subjects.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortEntry {
    pub id: String,
    pub cohort: String,
    pub seed: u64,
    /// File names relative to the cohort directory.
    pub volume: String,
    pub aif: String,
    pub mask: String,
    pub vt: String,
}

/// Writes one rendered subject and returns its index entry.
pub fn write_subject(dir: &Path, spec: &SubjectSpec, out: &SynthOutput) -> Result<CohortEntry> {
    let e = CohortEntry {
        id: spec.id.clone(),
        cohort: spec.cohort.label().to_string(),
        seed: spec.seed,
        volume: format!("{}.dpt", spec.id),
        aif: format!("{}_aif.csv", spec.id),
        mask: format!("{}_mask.dpt", spec.id),
        vt: format!("{}_vt.dpt", spec.id),
    };
    let v = &out.volume;
    write_dpt(&dir.join(&e.volume), v)?;
    write_curve(&dir.join(&e.aif), &out.aif)?;
    let mask = v
        .mask
        .as_ref()
        .map(|m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .unwrap_or_else(|| vec![1.0; v.voxels()]);
    write_dpt(&dir.join(&e.mask), &map_volume(v.dims, v.voxel_mm, mask)?)?;
    write_dpt(&dir.join(&e.vt), &map_volume(v.dims, v.voxel_mm, out.vt_map.clone())?)?;
    Ok(e)
}

pub fn write_index(dir: &Path, entries: &[CohortEntry]) -> Result<()> {
    write_json(&dir.join(COHORT_INDEX), &entries)
}

pub fn read_index(dir: &Path) -> Result<Vec<CohortEntry>> {
    read_json(&dir.join(COHORT_INDEX))
}

/// Reads a `T = 1` mask map; non-zero voxels are inside.
pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
    Ok(read_map(path)?.1.iter().map(|v| *v != 0.0).collect())
}

/// Brings a volume to the network input size: unchanged when it already
/// matches, block-averaged by 4 when it is four times larger.
pub fn to_input_dims(vol: DynamicVolume, input_dims: [usize; 3]) -> Result<DynamicVolume> {
    if vol.dims == input_dims {
        return Ok(vol);
    }
    if vol.dims == input_dims.map(|d| 4 * d) {
        return downsample4(&vol);
    }
    Err(Error::Shape {
        op: "network input",
        lhs: vol.dims.to_vec(),
        rhs: input_dims.to_vec(),
    })
}

/// Loads every subject as a network-sized training sample.
pub fn load_samples(dir: &Path, entries: &[CohortEntry], input_dims: [usize; 3]) -> Result<Vec<Sample>> {
    entries
        .iter()
        .map(|e| {
            let mut vol = read_dpt(&dir.join(&e.volume))?;
            vol.mask = Some(read_mask(&dir.join(&e.mask))?);
            let target = read_curve(&dir.join(&e.aif))?;
            Ok(Sample {
                id: e.id.clone(),
                cohort: e.cohort.clone(),
                volume: to_input_dims(vol, input_dims)?,
                target,
            })
        })
        .collect()
}
