//! Adam, flip augmentation, the training loop and k-fold cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::MetricsReport;
use crate::basis::active_count;
use crate::error::{Error, Result};
use crate::grid::{SampledCurve, TimeGrid};
use crate::model::{DlifModel, LossValue, ModelConfig};
use crate::nn::ParamStore;
use crate::rng::Rng;
use crate::sim::{downsample4, render_subject, DynamicVolume, SubjectSpec};
use crate::tensor::Graph;

/// Weights count as active above this fraction of the largest magnitude.
pub const ACTIVE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub betas: [f64; 2],
    pub adam_eps: f64,
    pub seed: u64,
    pub folds: usize,
    pub augment_flips: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            lr: 1e-4,
            batch: 1,
            betas: [0.9, 0.999],
            adam_eps: 1e-8,
            seed: 0,
            folds: 5,
            augment_flips: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.batch != 1 {
            return Err(Error::Config("only batch size 1 is supported".into()));
        }
        if !(0.0..1.0).contains(&self.betas[0]) || !(0.0..1.0).contains(&self.betas[1]) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Bias-corrected Adam state for every tensor of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, betas: [f64; 2], eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Adam {
            lr,
            betas,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update. Parameters are left untouched if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: vec![self.m.len()],
                rhs: vec![grads.len()],
            });
        }
        for ((name, t), g) in store.iter().zip(grads) {
            if g.len() != t.numel() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: t.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of '{name}' at element {i}")));
            }
        }
        self.t += 1;
        let [b1, b2] = self.betas;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (i, (_, param)) in store.tensors_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, x) in param.data_mut().iter_mut().enumerate() {
                let gj = grads[i][j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *x -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Mirrors each spatial axis independently with probability 1/2.
pub fn augment_flip(vol: &DynamicVolume, rng: &mut Rng) -> DynamicVolume {
    let axes = [rng.bernoulli(0.5), rng.bernoulli(0.5), rng.bernoulli(0.5)];
    if axes == [false; 3] {
        return vol.clone();
    }
    vol.flipped(axes)
}

/// A downsampled input volume with its ground-truth input function.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub cohort: String,
    pub volume: DynamicVolume,
    pub target: SampledCurve,
}

impl Sample {
    /// Renders a simulated subject and downsamples it for the network.
    pub fn from_subject(spec: &SubjectSpec, grid: &TimeGrid, noise_sigma: f64) -> Result<Self> {
        let out = render_subject(spec, grid, noise_sigma)?;
        Ok(Sample {
            id: spec.id.clone(),
            cohort: spec.cohort.label().to_string(),
            volume: downsample4(&out.volume)?,
            target: out.aif,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub l1: f64,
    pub sparsity: f64,
}

pub const LOSS_LOG_HEADER: &str = "epoch,step,loss,l1,sparsity";

pub fn write_loss_log<W: std::io::Write>(out: &mut W, rows: &[LogRow]) -> std::io::Result<()> {
    writeln!(out, "{LOSS_LOG_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{:e},{:e},{:e}", r.epoch, r.step, r.loss, r.l1, r.sparsity)?;
    }
    Ok(())
}

/// Everything needed to resume or reproduce a run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: DlifModel,
    pub adam: Adam,
    pub rng: Rng,
    pub epoch: usize,
    pub running_loss: f64,
    pub augment: bool,
}

impl Trainer {
    pub fn new(mcfg: ModelConfig, tcfg: &TrainConfig, seed: u64) -> Result<Self> {
        tcfg.validate()?;
        let model = DlifModel::new(mcfg, Rng::derive(seed, 0).next_u64())?;
        let adam = Adam::new(&model.store, tcfg.lr, tcfg.betas, tcfg.adam_eps);
        Ok(Trainer {
            model,
            adam,
            rng: Rng::derive(seed, 1),
            epoch: 0,
            running_loss: 0.0,
            augment: tcfg.augment_flips,
        })
    }

    /// Forward, backward and one Adam update on a single sample.
    pub fn step(&mut self, sample: &Sample) -> Result<LossValue> {
        let flipped;
        let vol = if self.augment {
            flipped = augment_flip(&sample.volume, &mut self.rng);
            &flipped
        } else {
            &sample.volume
        };
        let mut g = Graph::new();
        let p = self.model.store.bind(&mut g, true);
        let out = self.model.forward_graph(&mut g, &p, vol)?;
        let lv = self.model.loss_graph(&mut g, &out, &sample.target)?;
        let value = LossValue {
            total: g.scalar(lv.total),
            l1: g.scalar(lv.l1),
            sparsity: lv.sparsity.map(|s| g.scalar(s)).unwrap_or(0.0),
        };
        if !value.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss on '{}' at step {} (l1 {}, sparsity {})",
                sample.id,
                self.adam.t + 1,
                value.l1,
                value.sparsity
            )));
        }
        g.backward(lv.total)?;
        let grads = self.model.store.collect_grads(&g, &p);
        self.adam.step(&mut self.model.store, &grads)?;
        Ok(value)
    }

    /// One pass over `samples` in a freshly shuffled order.
    pub fn epoch(&mut self, samples: &[Sample], log: &mut Vec<LogRow>) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::Config("no training samples".into()));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        self.rng.shuffle(&mut order);
        let mut sum = 0.0;
        for i in order {
            let v = self.step(&samples[i])?;
            sum += v.total;
            log.push(LogRow {
                epoch: self.epoch,
                step: self.adam.t,
                loss: v.total,
                l1: v.l1,
                sparsity: v.sparsity,
            });
        }
        self.running_loss = sum / samples.len() as f64;
        self.epoch += 1;
        Ok(())
    }

    pub fn fit(&mut self, samples: &[Sample], epochs: usize, log: &mut Vec<LogRow>) -> Result<()> {
        for _ in 0..epochs {
            self.epoch(samples, log)?;
        }
        Ok(())
    }
}

/// Test-fold membership: a seeded shuffle, then index `i` of the shuffled
/// order goes to fold `i mod folds`. Each fold is sorted.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    if n < folds {
        return Err(Error::Config(format!("{n} subjects cannot fill {folds} folds (empty fold)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derive(seed, 0xf01d).shuffle(&mut order);
    let mut out = vec![Vec::new(); folds];
    for (i, s) in order.into_iter().enumerate() {
        out[i % folds].push(s);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub fold: usize,
    pub subject: String,
    pub cohort: String,
    pub metrics: MetricsReport,
    pub true_peak: f64,
    pub pred_peak: f64,
    /// Basis weights above [`ACTIVE_FRACTION`] of the largest (basis heads only).
    pub active_weights: Option<usize>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub test: Vec<usize>,
    pub trainer: Trainer,
    pub log: Vec<LogRow>,
    pub results: Vec<SubjectResult>,
}

pub fn evaluate_subjects(model: &DlifModel, fold: usize, samples: &[&Sample]) -> Result<Vec<SubjectResult>> {
    samples
        .iter()
        .map(|s| {
            let pred = model.predict(&s.volume)?;
            let w = pred.aif.params.weights();
            Ok(SubjectResult {
                fold,
                subject: s.id.clone(),
                cohort: s.cohort.clone(),
                metrics: MetricsReport::compute(&pred.curve, &s.target)?,
                true_peak: s.target.peak(),
                pred_peak: pred.curve.peak(),
                active_weights: (!w.is_empty()).then(|| active_count(w, ACTIVE_FRACTION)),
                estimate: pred.curve.values,
            })
        })
        .collect()
}

/// Trains one model per fold on the remaining folds and scores it on the
/// held-out one. Folds run in parallel; each is internally sequential.
pub fn cross_validate(samples: &[Sample], mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<Vec<FoldResult>> {
    tcfg.validate()?;
    mcfg.validate()?;
    let folds = fold_assignment(samples.len(), tcfg.folds, tcfg.seed)?;
    folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train: Vec<Sample> = (0..samples.len())
                .filter(|i| test.binary_search(i).is_err())
                .map(|i| samples[i].clone())
                .collect();
            let mut trainer = Trainer::new(mcfg.clone(), tcfg, Rng::derive(tcfg.seed, 100 + f as u64).next_u64())?;
            let mut log = Vec::new();
            trainer.fit(&train, tcfg.epochs, &mut log)?;
            let held: Vec<&Sample> = test.iter().map(|&i| &samples[i]).collect();
            let results = evaluate_subjects(&trainer.model, f, &held)?;
            Ok(FoldResult {
                fold: f,
                test: test.clone(),
                trainer,
                log,
                results,
            })
        })
        .collect()
}
