//! File formats and persistence.

mod checkpoint;
mod cohort;
mod config;
mod curve_csv;
mod dpt;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, ParamEntry,
    CHECKPOINT_MAGIC,
};
pub use config::{
    config_hash, load_run_config, read_json, sha256_file, sha256_hex, write_json, FileHash, Manifest, Paths,
    RunConfig, SimConfig, DEFAULT_NOISE_SIGMA, MANIFEST_FILE,
};
pub use curve_csv::{decode_curve, encode_curve, read_curve, write_curve, CURVE_HEADER};
pub use dpt::{decode_dpt, encode_dpt, map_volume, read_dpt, read_map, write_dpt, DptHeader, DPT_MAGIC};
pub use cohort::{
    load_samples, read_index, read_mask, to_input_dims, write_index, write_subject, CohortEntry, COHORT_INDEX,
};
