//! Arterial input function estimation from dynamic PET.
//!
//! A compact 3D vision transformer maps a downsampled dynamic PET sequence to
//! a metabolite-corrected arterial input function, either directly or through
//! a superposition of learned basis functions. The crate also carries the
//! synthetic kinetic data generator used for training, Logan graphical
//! analysis, the evaluation metrics and an ICA decomposition baseline.

// `!(x > 0.0)` is used deliberately so that NaN fails the check too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod epica;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
