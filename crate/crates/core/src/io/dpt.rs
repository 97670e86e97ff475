//! `.dpt`: one JSON header line, then little-endian `f32` voxels in
//! t-major, then z, y, x order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::sim::DynamicVolume;

pub const DPT_MAGIC: &str = "DPTv1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DptHeader {
    pub magic: String,
    pub dims: [usize; 4],
    pub voxel_mm: f64,
    pub frame_starts: Vec<f64>,
    pub frame_ends: Vec<f64>,
    pub units: String,
    pub seed: Option<u64>,
}

pub fn encode_dpt(vol: &DynamicVolume) -> Result<Vec<u8>> {
    let header = DptHeader {
        magic: DPT_MAGIC.into(),
        dims: vol.shape4(),
        voxel_mm: vol.voxel_mm,
        frame_starts: vol.grid.starts().to_vec(),
        frame_ends: vol.grid.ends().to_vec(),
        units: "SUV".into(),
        seed: vol.seed,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(4 * vol.data.len());
    for v in &vol.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dpt(bytes: &[u8], path: &Path) -> Result<DynamicVolume> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, bytes.len() as u64, "header line is not terminated"))?;
    let header: DptHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::format(path, e.column().saturating_sub(1) as u64, format!("bad header: {e}")))?;
    if header.magic != DPT_MAGIC {
        return Err(Error::format(path, 0, format!("magic '{}' is not {DPT_MAGIC}", header.magic)));
    }
    let grid = TimeGrid::new(header.frame_starts.clone(), header.frame_ends.clone())
        .map_err(|e| Error::format(path, 0, e.to_string()))?;
    let [t, h, w, l] = header.dims;
    if grid.len() != t {
        return Err(Error::format(path, 0, format!("{} frames in timing, dims say {t}", grid.len())));
    }
    let n = t * h * w * l;
    let payload = &bytes[nl + 1..];
    let start = (nl + 1) as u64;
    if payload.len() != 4 * n {
        return Err(Error::format(
            path,
            start + payload.len().min(4 * n) as u64,
            format!("payload is {} bytes, expected {}", payload.len(), 4 * n),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut vol = DynamicVolume::new(grid, [h, w, l], header.voxel_mm, data)
        .map_err(|e| Error::format(path, start, e.to_string()))?;
    vol.seed = header.seed;
    Ok(vol)
}

pub fn write_dpt(path: &Path, vol: &DynamicVolume) -> Result<()> {
    fs::write(path, encode_dpt(vol)?).map_err(|e| Error::io(path, e))
}

pub fn read_dpt(path: &Path) -> Result<DynamicVolume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dpt(&bytes, path)
}

/// A single-frame map (e.g. V_T or a mask) as a `T = 1` volume.
pub fn map_volume(dims: [usize; 3], voxel_mm: f64, values: Vec<f64>) -> Result<DynamicVolume> {
    DynamicVolume::new(TimeGrid::new(vec![0.0], vec![1.0])?, dims, voxel_mm, values)
}

/// Reads a `T = 1` map; any non-zero value counts as inside for masks.
pub fn read_map(path: &Path) -> Result<(DynamicVolume, Vec<f64>)> {
    let v = read_dpt(path)?;
    if v.frames() != 1 {
        return Err(Error::format(path, 0, format!("expected a single-frame map, found {} frames", v.frames())));
    }
    let values = v.data.clone();
    Ok((v, values))
}
