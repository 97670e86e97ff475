//! The estimation network: downsampled volume → patch tokens → transformer
//! encoder → one of three interchangeable heads.

use serde::{Deserialize, Serialize};

use crate::basis::{
    self, activate_scale_graph, AifParams, ExpSigmoidParams, Family, GaussianParams, ScaledAif,
};
use crate::error::{Error, Result};
use crate::grid::{SampledCurve, TimeGrid};
use crate::nn::{
    encoder_forward, patch_embed, prepend_estimation_token, trunc_normal, Bound, EncoderBlock, LayerNorm, Linear,
    ParamId, ParamStore,
};
use crate::rng::Rng;
use crate::sim::DynamicVolume;
use crate::tensor::{Graph, Tensor, Var};

/// Span over which basis locations start out evenly spaced, minutes.
pub const LOCATION_SPAN: f64 = 90.0;
/// Initial steepness of the sigmoid gate.
pub const STEEPNESS_OFFSET: f64 = 1.0;
/// Raw head outputs are multiplied by this before offsets are added, so that
/// SUV-scale amplitudes and minute-scale locations are reachable at a small
/// learning rate.
pub const HEAD_GAIN: f64 = 10.0;
/// Gain on the Gaussian width column; widths collapse onto the ε floor when
/// they move as fast as the locations.
pub const WIDTH_GAIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub head: Family,
    pub use_peak: bool,
    pub use_sparse: bool,
    /// Number of basis functions.
    pub k: usize,
    /// Patch edge length.
    pub patch: usize,
    /// Token width.
    pub dim: usize,
    /// Encoder blocks.
    pub depth: usize,
    pub heads: usize,
    pub lambda_sparse: f64,
    /// Spatial size of the (downsampled) input volume.
    pub input_dims: [usize; 3],
    pub grid: TimeGrid,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            head: Family::Gaussian,
            use_peak: true,
            use_sparse: false,
            k: 16,
            patch: 2,
            dim: 64,
            depth: 4,
            heads: 4,
            lambda_sparse: 0.01,
            input_dims: [8, 8, 8],
            grid: TimeGrid::standard(),
        }
    }
}

/// The nine head variants, by display name.
pub const ABLATIONS: [&str; 9] = [
    "Direct Est.",
    "Exp.",
    "Exp. + Peak",
    "Exp. + Sparse",
    "Exp. + Peak + Sparse",
    "Gaussian",
    "Gaussian + Peak",
    "Gaussian + Sparse",
    "Gaussian + Peak + Sparse",
];

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.head == Family::Direct && (self.use_peak || self.use_sparse) {
            return Err(Error::Config("direct head takes neither a peak factor nor sparsity".into()));
        }
        if self.head != Family::Direct && (self.k == 0 || self.k > self.grid.len()) {
            return Err(Error::Config(format!(
                "K = {} must lie in 1..={} (frame count)",
                self.k,
                self.grid.len()
            )));
        }
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "token width {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("encoder depth must be at least 1".into()));
        }
        if self.patch == 0 || self.input_dims.iter().any(|d| d % self.patch != 0) {
            return Err(Error::Config(format!(
                "input dims {:?} not divisible by patch size {}",
                self.input_dims, self.patch
            )));
        }
        if !(self.lambda_sparse >= 0.0) {
            return Err(Error::Config("lambda_sparse must be non-negative".into()));
        }
        Ok(())
    }

    /// Configuration for one of the [`ABLATIONS`] names (case-insensitive,
    /// spaces optional, e.g. `gaussian+peak`).
    pub fn ablation(name: &str) -> Result<Self> {
        let key: String = name.to_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
        let (head, rest) = if let Some(r) = key.strip_prefix("direct") {
            (Family::Direct, r)
        } else if let Some(r) = key.strip_prefix("exp.").or_else(|| key.strip_prefix("exp")) {
            (Family::ExpSigmoid, r)
        } else if let Some(r) = key.strip_prefix("gaussian") {
            (Family::Gaussian, r)
        } else {
            return Err(Error::Config(format!("unknown configuration '{name}'")));
        };
        let mut cfg = ModelConfig {
            head,
            use_peak: false,
            use_sparse: false,
            ..Default::default()
        };
        for part in rest.split('+').filter(|p| !p.is_empty()) {
            match part {
                "peak" => cfg.use_peak = true,
                "sparse" => cfg.use_sparse = true,
                "est." | "est" if head == Family::Direct => {}
                _ => return Err(Error::Config(format!("unknown configuration part '{part}' in '{name}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        let mut s = match self.head {
            Family::Direct => return "Direct Est.".into(),
            Family::ExpSigmoid => "Exp.".to_string(),
            Family::Gaussian => "Gaussian".to_string(),
        };
        if self.use_peak {
            s.push_str(" + Peak");
        }
        if self.use_sparse {
            s.push_str(" + Sparse");
        }
        s
    }

    pub fn num_patches(&self) -> usize {
        self.input_dims.iter().map(|d| d / self.patch).product()
    }

    fn head_width(&self) -> usize {
        match self.head {
            Family::Direct => self.grid.len(),
            f => self.k * f.arity(),
        }
    }
}

/// Evenly spaced initial locations over [`LOCATION_SPAN`].
fn location_offsets(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.0];
    }
    (0..k).map(|i| LOCATION_SPAN * i as f64 / (k - 1) as f64).collect()
}

/// Initial width of each basis function: half the location spacing.
fn width_offset(k: usize) -> f64 {
    0.5 * LOCATION_SPAN / k.max(2).saturating_sub(1) as f64
}

#[derive(Debug, Clone)]
pub struct DlifModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    embed: Linear,
    est_token: ParamId,
    pos: ParamId,
    blocks: Vec<EncoderBlock>,
    norm: LayerNorm,
    head: Linear,
    peak: Option<Linear>,
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone)]
pub struct GraphOutput {
    /// Estimate at frame midpoints, `[T]`.
    pub curve: Var,
    /// Basis weights ω as `[K, 1]`; absent for the direct head.
    pub weights: Option<Var>,
    /// Activated parameter columns in family order, each `[K, 1]`.
    pub columns: Vec<Var>,
    /// Raw head output: `[T]` or `[K, arity]`.
    pub raw: Var,
    pub alpha: Option<Var>,
    pub attention: Vec<Vec<Var>>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub l1: Var,
    pub sparsity: Option<Var>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub l1: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub aif: ScaledAif,
    pub curve: SampledCurve,
    /// Raw head output (before offsets and activations).
    pub raw: Tensor,
    pub alpha_raw: Option<f64>,
    /// `[block][head]` attention matrices, each `[N+1, N+1]`.
    pub attention: Vec<Vec<Tensor>>,
}

impl DlifModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let t = cfg.grid.len();
        let p3 = cfg.patch.pow(3);
        let n = cfg.num_patches();
        let embed = Linear::new(&mut store, "patch_embed", t * p3, cfg.dim, &mut rng);
        let est_token = store.add("est_token", trunc_normal(&[1, cfg.dim], &mut rng));
        let pos = store.add("pos_embed", trunc_normal(&[n + 1, cfg.dim], &mut rng));
        let blocks = (0..cfg.depth)
            .map(|j| EncoderBlock::new(&mut store, &format!("block{j}"), cfg.dim, cfg.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let norm = LayerNorm::new(&mut store, "norm", cfg.dim);
        let head = Linear::new(&mut store, "head", cfg.dim, cfg.head_width(), &mut rng);
        let peak = cfg
            .use_peak
            .then(|| Linear::new(&mut store, "peak_head", cfg.dim, 1, &mut rng));
        Ok(DlifModel {
            cfg,
            store,
            embed,
            est_token,
            pos,
            blocks,
            norm,
            head,
            peak,
        })
    }

    fn check_input(&self, vol: &DynamicVolume) -> Result<()> {
        if vol.grid != self.cfg.grid {
            return Err(Error::GridMismatch(format!(
                "volume has {} frames, model expects the configured {}-frame grid",
                vol.grid.len(),
                self.cfg.grid.len()
            )));
        }
        if vol.dims != self.cfg.input_dims {
            return Err(Error::Shape {
                op: "forward",
                lhs: vol.dims.to_vec(),
                rhs: self.cfg.input_dims.to_vec(),
            });
        }
        Ok(())
    }

    /// Builds the forward pass on `g` with parameters bound as `p`.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, vol: &DynamicVolume) -> Result<GraphOutput> {
        self.check_input(vol)?;
        let cfg = &self.cfg;
        let tokens = patch_embed(g, p, &vol.data, vol.shape4(), cfg.patch, &self.embed)?;
        let z0 = prepend_estimation_token(g, tokens, p.var(self.est_token), p.var(self.pos))?;
        let (z, attention) = encoder_forward(g, p, &self.blocks, z0)?;
        let est = g.slice(z, 0, 0, 1)?;
        let est = self.norm.forward(g, p, est)?;
        let raw = self.head.forward(g, p, est)?;
        let times = cfg.grid.midpoints();

        let alpha = match &self.peak {
            Some(lin) => {
                let a = lin.forward(g, p, est)?;
                let a = g.reshape(a, &[1])?;
                Some(g.add_scalar(a, 1.0)?)
            }
            None => None,
        };

        let (curve, weights, columns, raw) = match cfg.head {
            Family::Direct => {
                let raw = g.reshape(raw, &[times.len()])?;
                let scaled = g.mul_scalar(raw, HEAD_GAIN)?;
                let v = g.relu(scaled)?;
                (v, None, vec![], raw)
            }
            fam => {
                let k = cfg.k;
                let raw = g.reshape(raw, &[k, fam.arity()])?;
                let col = |g: &mut Graph, i: usize| -> Result<Var> {
                    let c = g.slice(raw, 1, i, i + 1)?;
                    g.mul_scalar(c, HEAD_GAIN)
                };
                let loc_off = g.constant(Tensor::new([k, 1], location_offsets(k))?);
                let w = col(g, 0)?;
                match fam {
                    Family::Gaussian => {
                        let mu = col(g, 1)?;
                        let mu = g.add(mu, loc_off)?;
                        let s = g.slice(raw, 1, 2, 3)?;
                        let s = g.mul_scalar(s, WIDTH_GAIN)?;
                        let s = g.add_scalar(s, width_offset(k))?;
                        let s = activate_scale_graph(g, s)?;
                        let c = basis::gaussian_curve(g, w, mu, s, &times)?;
                        (c, Some(w), vec![w, mu, s], raw)
                    }
                    _ => {
                        // λ lives on a much smaller scale than the other columns
                        let lam = col(g, 1)?;
                        let lam = g.mul_scalar(lam, rate_offset(k))?;
                        let lam = g.add_scalar(lam, rate_offset(k))?;
                        let lam = activate_scale_graph(g, lam)?;
                        let gam = col(g, 2)?;
                        let gam = g.add(gam, loc_off)?;
                        let eta = col(g, 3)?;
                        let eta = g.add_scalar(eta, STEEPNESS_OFFSET)?;
                        let c = basis::expsig_curve(g, w, lam, gam, eta, &times)?;
                        (c, Some(w), vec![w, lam, gam, eta], raw)
                    }
                }
            }
        };
        let curve = match alpha {
            Some(a) => g.mul(curve, a)?,
            None => curve,
        };
        Ok(GraphOutput {
            curve,
            weights,
            columns,
            raw,
            alpha,
            attention,
        })
    }

    /// `L1 + λ·R(ω)` on the graph (the sparsity term only when enabled).
    pub fn loss_graph(&self, g: &mut Graph, out: &GraphOutput, target: &SampledCurve) -> Result<LossVars> {
        if target.grid != self.cfg.grid {
            return Err(Error::GridMismatch("target is not on the model grid".into()));
        }
        let l1 = basis::l1_loss_graph(g, out.curve, &target.values)?;
        match (self.cfg.use_sparse, out.weights) {
            (true, Some(w)) => {
                let r = basis::sparsity_graph(g, w)?;
                let lr = g.mul_scalar(r, self.cfg.lambda_sparse)?;
                let total = g.add(l1, lr)?;
                Ok(LossVars {
                    total,
                    l1,
                    sparsity: Some(r),
                })
            }
            _ => Ok(LossVars {
                total: l1,
                l1,
                sparsity: None,
            }),
        }
    }

    /// Inference on frozen parameters.
    pub fn predict(&self, vol: &DynamicVolume) -> Result<Prediction> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let out = self.forward_graph(&mut g, &p, vol)?;
        let col = |v: Var| g.value(v).to_vec();
        let alpha = out.alpha.map(|a| g.scalar(a));
        let params = match self.cfg.head {
            Family::Direct => AifParams::Direct(col(out.curve)),
            Family::Gaussian => AifParams::Gaussian(GaussianParams {
                weights: col(out.columns[0]),
                locations: col(out.columns[1]),
                scales: col(out.columns[2]),
            }),
            Family::ExpSigmoid => AifParams::ExpSigmoid(ExpSigmoidParams {
                weights: col(out.columns[0]),
                rates: col(out.columns[1]),
                centers: col(out.columns[2]),
                steepness: col(out.columns[3]),
            }),
        };
        let aif = ScaledAif { params, alpha };
        let curve = basis::sample_on_grid(&aif, &self.cfg.grid)?;
        Ok(Prediction {
            aif,
            curve,
            raw: g.tensor(out.raw),
            alpha_raw: alpha.map(|a| a - 1.0),
            attention: out
                .attention
                .iter()
                .map(|b| b.iter().map(|&v| g.tensor(v)).collect())
                .collect(),
        })
    }
}

/// Initial λ matching a Gaussian of [`width_offset`] standard deviation.
fn rate_offset(k: usize) -> f64 {
    let s = width_offset(k);
    0.5 / (s * s)
}

/// Loss of a finished estimate against a target curve.
pub fn loss(pred: &ScaledAif, target: &SampledCurve, cfg: &ModelConfig) -> Result<LossValue> {
    let sampled = basis::sample_on_grid(pred, &target.grid)?;
    let l1 = basis::l1_similarity(&sampled, target)?;
    let sparsity = if cfg.use_sparse && !pred.params.weights().is_empty() {
        basis::sparsity_penalty(pred.params.weights())?
    } else {
        0.0
    };
    Ok(LossValue {
        total: l1 + cfg.lambda_sparse * sparsity,
        l1,
        sparsity,
    })
}

/// Toy-sized counterpart of a named ablation.
pub fn ablation_toy(name: &str) -> Result<ModelConfig> {
    let c = ModelConfig::ablation(name)?;
    Ok(toy_config(c.head, c.use_peak, c.use_sparse))
}

/// A tiny configuration (4³ input, 6 frames, one block) for gradient checks.
pub fn toy_config(head: Family, use_peak: bool, use_sparse: bool) -> ModelConfig {
    ModelConfig {
        head,
        use_peak,
        use_sparse,
        k: 4,
        patch: 2,
        dim: 8,
        depth: 1,
        heads: 2,
        input_dims: [4, 4, 4],
        grid: TimeGrid::uniform(6, 90.0).expect("valid grid"),
        ..Default::default()
    }
}

/// Finite-difference check of the full loss graph with respect to every
/// parameter tensor (`max_coords` probes per tensor) on a random toy input.
pub fn model_grad_check(cfg: &ModelConfig, seed: u64, max_coords: Option<usize>) -> Result<f64> {
    let m = DlifModel::new(cfg.clone(), seed)?;
    let mut rng = Rng::derive(seed, 7);
    let n = cfg.grid.len() * cfg.input_dims.iter().product::<usize>();
    let data = (0..n).map(|_| rng.uniform_range(0.0, 3.0)).collect();
    let vol = DynamicVolume::new(cfg.grid.clone(), cfg.input_dims, 4.0, data)?;
    let target = SampledCurve::new(
        cfg.grid.clone(),
        (0..cfg.grid.len()).map(|_| rng.uniform_range(0.2, 3.0)).collect(),
    )?;
    let inputs: Vec<Tensor> = m.store.iter().map(|(_, t)| t.clone()).collect();
    crate::tensor::grad_check_inputs(
        |g, xs| {
            let p = Bound::from_vars(xs.to_vec());
            let out = m.forward_graph(g, &p, &vol)?;
            Ok(m.loss_graph(g, &out, &target)?.total)
        },
        &inputs,
        &crate::tensor::GradCheckOptions {
            eps: 1e-6,
            max_coords,
            seed,
        },
    )
}
