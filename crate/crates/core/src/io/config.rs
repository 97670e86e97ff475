//! Run configuration and output manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::epica::IcaConfig;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelConfig;
use crate::sim::SimRanges;
use crate::trainer::TrainConfig;

/// Default per-minute noise level of the simulator, SUV.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub subjects: usize,
    pub dims: [usize; 3],
    pub noise_sigma: f64,
    pub seed: u64,
    pub grid: TimeGrid,
    pub ranges: SimRanges,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            subjects: 100,
            dims: [32, 32, 32],
            noise_sigma: DEFAULT_NOISE_SIGMA,
            seed: 0,
            grid: TimeGrid::standard(),
            ranges: SimRanges::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sim: SimConfig,
    pub epica: IcaConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.model.grid != self.sim.grid {
            return Err(Error::Config("model and simulator use different time grids".into()));
        }
        if self.sim.dims.iter().any(|d| *d == 0 || d % 4 != 0) {
            return Err(Error::Config(format!("simulated dims {:?} must be positive multiples of 4", self.sim.dims)));
        }
        let down = self.sim.dims.map(|d| d / 4);
        if down != self.model.input_dims {
            return Err(Error::Config(format!(
                "simulated dims {:?} downsample to {down:?}, model expects {:?}",
                self.sim.dims, self.model.input_dims
            )));
        }
        if !(self.sim.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        // convert line/column to a byte offset
        let offset: usize = text
            .split_inclusive('\n')
            .take(e.line().saturating_sub(1))
            .map(str::len)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        Error::format(path, offset as u64, e.to_string())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let cfg: RunConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Hash of the compact JSON form of a configuration.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(cfg)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn new<T: Serialize>(command: &str, args: Vec<String>, seed: Option<u64>, config: &T) -> Result<Self> {
        Ok(Manifest {
            command: command.into(),
            args,
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_hash: config_hash(config)?,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }
}
