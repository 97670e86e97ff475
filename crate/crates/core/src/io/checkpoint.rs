//! Model checkpoints: a JSON header line naming every parameter with its shape
//! and byte offset, then a little-endian `f32` blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DlifModel, ModelConfig};
use crate::tensor::Tensor;
use crate::trainer::Trainer;

pub const CHECKPOINT_MAGIC: &str = "DLIFCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub magic: String,
    pub model: ModelConfig,
    pub epoch: usize,
    pub step: u64,
    pub running_loss: f64,
    pub rng_state: [u64; 4],
    pub params: Vec<ParamEntry>,
    pub blob_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: DlifModel,
}

pub fn encode_checkpoint(tr: &Trainer) -> Result<Vec<u8>> {
    let mut params = Vec::new();
    let mut blob = Vec::new();
    for (name, t) in tr.model.store.iter() {
        params.push(ParamEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len(),
        });
        for v in t.data() {
            blob.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        magic: CHECKPOINT_MAGIC.into(),
        model: tr.model.cfg.clone(),
        epoch: tr.epoch,
        step: tr.adam.t,
        running_loss: tr.running_loss,
        rng_state: tr.rng.state(),
        params,
        blob_bytes: blob.len(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(&blob);
    Ok(out)
}

/// Rebuilds the model; `expected`, when given, must equal the stored config.
pub fn decode_checkpoint(bytes: &[u8], path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, bytes.len() as u64, "truncated: header line is not terminated"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::format(path, e.column().saturating_sub(1) as u64, format!("bad header: {e}")))?;
    if header.magic != CHECKPOINT_MAGIC {
        return Err(Error::format(path, 0, "not a checkpoint"));
    }
    if let Some(cfg) = expected {
        if *cfg != header.model {
            return Err(Error::Config(format!(
                "{}: checkpoint was trained as '{}', requested '{}' with a different configuration",
                path.display(),
                header.model.label(),
                cfg.label()
            )));
        }
    }
    let blob = &bytes[nl + 1..];
    let base = (nl + 1) as u64;
    if blob.len() < header.blob_bytes {
        return Err(Error::format(
            path,
            base + blob.len() as u64,
            format!("truncated: blob has {} of {} bytes", blob.len(), header.blob_bytes),
        ));
    }
    if blob.len() > header.blob_bytes {
        return Err(Error::format(path, base + header.blob_bytes as u64, "trailing bytes after blob"));
    }
    let mut model = DlifModel::new(header.model.clone(), 0)?;
    if model.store.len() != header.params.len() {
        return Err(Error::format(
            path,
            0,
            format!("{} parameters stored, configuration needs {}", header.params.len(), model.store.len()),
        ));
    }
    let mut expected_offset = 0;
    for ((name, t), entry) in model.store.tensors_mut().zip(&header.params) {
        if entry.name != name || entry.shape != t.shape() {
            return Err(Error::format(
                path,
                0,
                format!("parameter '{}' {:?} does not match '{name}' {:?}", entry.name, entry.shape, t.shape()),
            ));
        }
        if entry.offset != expected_offset {
            return Err(Error::format(path, base + entry.offset as u64, format!("offset of '{name}' is inconsistent")));
        }
        let n = t.numel();
        let chunk = &blob[entry.offset..entry.offset + 4 * n];
        let data: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        *t = Tensor::new(entry.shape.clone(), data)?;
        expected_offset += 4 * n;
    }
    if expected_offset != header.blob_bytes {
        return Err(Error::format(path, base, "blob length disagrees with parameter manifest"));
    }
    Ok(Checkpoint { header, model })
}

pub fn save_checkpoint(path: &Path, tr: &Trainer) -> Result<()> {
    fs::write(path, encode_checkpoint(tr)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Family;
    use crate::grid::TimeGrid;
    use crate::rng::Rng;
    use crate::sim::DynamicVolume;
    use crate::trainer::TrainConfig;

    fn small() -> ModelConfig {
        ModelConfig {
            head: Family::ExpSigmoid,
            use_peak: true,
            k: 3,
            dim: 8,
            depth: 1,
            heads: 2,
            input_dims: [4, 4, 4],
            grid: TimeGrid::uniform(5, 50.0).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_reproduces_forward() {
        let tr = Trainer::new(small(), &TrainConfig::default(), 4).unwrap();
        let bytes = encode_checkpoint(&tr).unwrap();
        let ck = decode_checkpoint(&bytes, Path::new("m.ckpt"), Some(&small())).unwrap();
        assert_eq!(ck.header.params.len(), tr.model.store.len());
        let mut rng = Rng::new(2);
        let data = (0..5 * 64).map(|_| rng.uniform()).collect();
        let vol = DynamicVolume::new(small().grid, [4, 4, 4], 4.0, data).unwrap();
        let a = tr.model.predict(&vol).unwrap().curve.values;
        let b = ck.model.predict(&vol).unwrap().curve.values;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-3), "{x} {y}");
        }
        // reload → save is byte-stable
        let again = Trainer {
            model: ck.model,
            ..tr
        };
        let mut again = again;
        again.epoch = ck.header.epoch;
        assert_eq!(encode_checkpoint(&again).unwrap(), bytes);
    }

    #[test]
    fn rejects_truncation_and_mismatch() {
        let tr = Trainer::new(small(), &TrainConfig::default(), 4).unwrap();
        let bytes = encode_checkpoint(&tr).unwrap();
        let e = decode_checkpoint(&bytes[..bytes.len() - 10], Path::new("m.ckpt"), None).unwrap_err();
        assert!(e.to_string().contains("truncated"));
        let mut other = small();
        other.k = 4;
        assert!(decode_checkpoint(&bytes, Path::new("m.ckpt"), Some(&other)).is_err());
    }
}
