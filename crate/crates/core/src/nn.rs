//! Transformer building blocks on top of [`crate::tensor::Graph`].
//!
//! Parameters live in a [`ParamStore`] that outlives any single graph. Each
//! forward pass binds the store onto a fresh graph and the layers look their
//! leaves up by [`ParamId`].

use std::io::Write;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Graph, Tensor, Var};

/// Standard deviation of the truncated-normal weight initialization.
pub const INIT_STD: f64 = 0.02;
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Registers every parameter on `g`, as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Gradients of all bound parameters, in store order.
    pub fn collect_grads(&self, g: &Graph, bound: &Bound) -> Vec<Vec<f64>> {
        bound
            .vars
            .iter()
            .zip(&self.tensors)
            .map(|(&v, t)| {
                g.grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.numel()])
            })
            .collect()
    }
}

/// Graph leaves for one binding of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps leaves that were registered in store order by the caller.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

pub(crate) fn trunc_normal(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.truncated_normal(INIT_STD)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), trunc_normal(&[in_dim, out_dim], rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([out_dim]));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// `x` is `[rows, in_dim]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.weight))?;
        g.add(y, p.var(self.bias))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full([dim], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros([dim])),
            eps: LN_EPS,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let n = g.normalize(x, self.eps)?;
        let y = g.mul(n, p.var(self.gamma))?;
        g.add(y, p.var(self.beta))
    }
}

/// Multi-head softmax self-attention.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub num_heads: usize,
    pub head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, num_heads: usize, rng: &mut Rng) -> Result<Self> {
        if num_heads == 0 || !dim.is_multiple_of(num_heads) {
            return Err(Error::Config(format!(
                "embedding dim {dim} not divisible by {num_heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * dim, rng),
            proj: Linear::new(store, &format!("{name}.proj"), dim, dim, rng),
            num_heads,
            head_dim: dim / num_heads,
        })
    }

    /// Returns the block output and one `[tokens, tokens]` attention matrix per head.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<(Var, Vec<Var>)> {
        let dim = self.num_heads * self.head_dim;
        let qkv = self.qkv.forward(g, p, x)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.num_heads);
        let mut attn = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let lo = h * self.head_dim;
            let hi = lo + self.head_dim;
            let q = g.slice(qkv, 1, lo, hi)?;
            let k = g.slice(qkv, 1, dim + lo, dim + hi)?;
            let v = g.slice(qkv, 1, 2 * dim + lo, 2 * dim + hi)?;
            let kt = g.transpose(k)?;
            let logits = g.matmul(q, kt)?;
            let logits = g.mul_scalar(logits, scale)?;
            let a = g.softmax(logits)?;
            outs.push(g.matmul(a, v)?);
            attn.push(a);
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat(&outs, 1)? };
        Ok((self.proj.forward(g, p, cat)?, attn))
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Mlp {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, p, x)?;
        let h = g.gelu(h)?;
        self.fc2.forward(g, p, h)
    }
}

/// Pre-norm transformer block: `z + MSA(LN(z))` then `z + MLP(LN(z))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

impl EncoderBlock {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, num_heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(EncoderBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, num_heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            mlp: Mlp::new(store, &format!("{name}.mlp"), dim, 4 * dim, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, z: Var) -> Result<(Var, Vec<Var>)> {
        let h = self.ln1.forward(g, p, z)?;
        let (a, attn) = self.attn.forward(g, p, h)?;
        let z = g.add(a, z)?;
        let h = self.ln2.forward(g, p, z)?;
        let m = self.mlp.forward(g, p, h)?;
        Ok((g.add(m, z)?, attn))
    }
}

/// Runs the blocks in order; the second element holds the attention matrices
/// as `[block][head]`.
pub fn encoder_forward(
    g: &mut Graph,
    p: &Bound,
    blocks: &[EncoderBlock],
    z0: Var,
) -> Result<(Var, Vec<Vec<Var>>)> {
    if blocks.is_empty() {
        return Err(Error::Config("encoder needs at least one block".into()));
    }
    let mut z = z0;
    let mut maps = Vec::with_capacity(blocks.len());
    for b in blocks {
        let (next, attn) = b.forward(g, p, z)?;
        z = next;
        maps.push(attn);
    }
    Ok((z, maps))
}

/// Cuts a `[T, h, w, l]` volume into `P³` patches and flattens each one in
/// (t, z, y, x) order. Patches are enumerated z-major. Output is `[N, T·P³]`.
pub fn patchify(data: &[f64], dims: [usize; 4], patch: usize) -> Result<Tensor> {
    let [t, h, w, l] = dims;
    if patch == 0 || h % patch != 0 || w % patch != 0 || l % patch != 0 {
        let pad = |d: usize| if patch == 0 { 0 } else { (patch - d % patch) % patch };
        return Err(Error::Config(format!(
            "spatial dims {h}x{w}x{l} not divisible by patch size {patch}; pad by {}x{}x{}",
            pad(h),
            pad(w),
            pad(l)
        )));
    }
    if data.len() != t * h * w * l {
        return Err(Error::Shape {
            op: "patchify",
            lhs: dims.to_vec(),
            rhs: vec![data.len()],
        });
    }
    let (nh, nw, nl) = (h / patch, w / patch, l / patch);
    let n = nh * nw * nl;
    let plen = t * patch * patch * patch;
    let mut out = Vec::with_capacity(n * plen);
    for pz in 0..nh {
        for py in 0..nw {
            for px in 0..nl {
                for ti in 0..t {
                    for z in 0..patch {
                        for y in 0..patch {
                            let zz = pz * patch + z;
                            let yy = py * patch + y;
                            let base = ((ti * h + zz) * w + yy) * l + px * patch;
                            out.extend_from_slice(&data[base..base + patch]);
                        }
                    }
                }
            }
        }
    }
    Tensor::new([n, plen], out)
}

/// Tokens `[N, D]` from a volume via a linear projection of each patch.
pub fn patch_embed(
    g: &mut Graph,
    p: &Bound,
    data: &[f64],
    dims: [usize; 4],
    patch: usize,
    proj: &Linear,
) -> Result<Var> {
    let patches = patchify(data, dims, patch)?;
    if patches.shape()[1] != proj.in_dim {
        return Err(Error::Shape {
            op: "patch_embed",
            lhs: patches.shape().to_vec(),
            rhs: vec![proj.in_dim, proj.out_dim],
        });
    }
    let x = g.constant(patches);
    proj.forward(g, p, x)
}

/// Prepends the estimation token to the patch tokens and adds the positional embedding.
pub fn prepend_estimation_token(g: &mut Graph, tokens: Var, est_token: Var, pos: Var) -> Result<Var> {
    let z = g.concat(&[est_token, tokens], 0)?;
    if g.shape(z) != g.shape(pos) {
        return Err(Error::Shape {
            op: "prepend_estimation_token",
            lhs: g.shape(z).to_vec(),
            rhs: g.shape(pos).to_vec(),
        });
    }
    g.add(z, pos)
}

/// Writes attention matrices as CSV with header `block,head,query,key,weight`.
pub fn write_attention_csv<W: Write>(out: &mut W, maps: &[Vec<Tensor>]) -> std::io::Result<()> {
    writeln!(out, "block,head,query,key,weight")?;
    for (b, heads) in maps.iter().enumerate() {
        for (h, a) in heads.iter().enumerate() {
            let n = a.shape()[1];
            for (i, row) in a.data().chunks(n).enumerate() {
                for (j, w) in row.iter().enumerate() {
                    writeln!(out, "{b},{h},{i},{j},{w:?}")?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check_inputs, GradCheckOptions};

    fn random(shape: &[usize], rng: &mut Rng, std: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal() * std).collect()).unwrap()
    }

    #[test]
    fn patch_count_for_default_geometry() {
        let data = vec![0.0; 30 * 8 * 8 * 8];
        let p = patchify(&data, [30, 8, 8, 8], 2).unwrap();
        assert_eq!(p.shape(), &[64, 240]);
        // full-size 160x192x160 crop downsampled by 4, patch 8
        assert_eq!((40 / 8) * (48 / 8) * (40 / 8), 150);
        let data = vec![0.0; 2 * 40 * 48 * 40];
        assert_eq!(patchify(&data, [2, 40, 48, 40], 8).unwrap().shape()[0], 150);
    }

    #[test]
    fn non_divisible_reports_padding() {
        let data = vec![0.0; 7 * 8 * 8];
        let err = patchify(&data, [1, 7, 8, 8], 2).unwrap_err().to_string();
        assert!(err.contains("pad by 1x0x0"), "{err}");
    }

    #[test]
    fn identity_projection_returns_raw_patch() {
        let (t, s, pz) = (2, 4, 2);
        let data: Vec<f64> = (0..t * s * s * s).map(|i| i as f64).collect();
        let mut store = ParamStore::new();
        let mut rng = Rng::new(0);
        let dim = t * pz * pz * pz;
        let proj = Linear::new(&mut store, "e", dim, dim, &mut rng);
        let mut eye = Tensor::zeros([dim, dim]);
        for i in 0..dim {
            eye.data_mut()[i * dim + i] = 1.0;
        }
        *store.get_mut(proj.weight) = eye;
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let tok = patch_embed(&mut g, &p, &data, [t, s, s, s], pz, &proj).unwrap();
        let raw = patchify(&data, [t, s, s, s], pz).unwrap();
        assert_eq!(g.value(tok), raw.data());
        // first patch, frame 0: voxels (0,0,0),(0,0,1),(0,1,0),(0,1,1),(1,0,0),...
        assert_eq!(&raw.data()[..8], &[0., 1., 4., 5., 16., 17., 20., 21.]);
    }

    #[test]
    fn estimation_token_with_zero_pos() {
        let mut rng = Rng::new(1);
        let mut g = Graph::new();
        let toks = g.constant(random(&[64, 64], &mut rng, 1.0));
        let est = g.constant(random(&[1, 64], &mut rng, 1.0));
        let pos = g.constant(Tensor::zeros([65, 64]));
        let z = prepend_estimation_token(&mut g, toks, est, pos).unwrap();
        assert_eq!(g.shape(z), &[65, 64]);
        assert_eq!(&g.value(z)[64..], g.value(toks));
        assert_eq!(&g.value(z)[..64], g.value(est));
    }

    fn build_blocks(dim: usize, heads: usize, n: usize, seed: u64) -> (ParamStore, Vec<EncoderBlock>) {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let blocks = (0..n)
            .map(|i| EncoderBlock::new(&mut store, &format!("b{i}"), dim, heads, &mut rng).unwrap())
            .collect();
        (store, blocks)
    }

    #[test]
    fn zero_weights_give_residual_identity() {
        let (mut store, blocks) = build_blocks(8, 2, 2, 3);
        for (name, t) in store.tensors_mut() {
            if !name.contains(".ln") {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut rng = Rng::new(4);
        let x = random(&[5, 8], &mut rng, 1.0);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let z0 = g.constant(x.clone());
        let (z, _) = encoder_forward(&mut g, &p, &blocks, z0).unwrap();
        assert_eq!(g.value(z), x.data());
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (store, blocks) = build_blocks(16, 4, 2, 5);
        let mut rng = Rng::new(6);
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let z0 = g.constant(random(&[9, 16], &mut rng, 1.0));
        let (_, maps) = encoder_forward(&mut g, &p, &blocks, z0).unwrap();
        assert_eq!(maps.len(), 2);
        for heads in &maps {
            assert_eq!(heads.len(), 4);
            for &a in heads {
                assert_eq!(g.shape(a), &[9, 9]);
                for row in g.value(a).chunks(9) {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn head_dim_scaling_changes_attention() {
        // Halving the logits (a 4x larger head-dim divisor) changes a non-uniform softmax.
        let mut g = Graph::new();
        let l = g.constant(Tensor::vector(vec![1.0, 2.0, 4.0]));
        let a1 = g.softmax(l).unwrap();
        let lh = g.mul_scalar(l, 0.5).unwrap();
        let a2 = g.softmax(lh).unwrap();
        assert!(g.value(a1).iter().zip(g.value(a2)).any(|(x, y)| (x - y).abs() > 1e-3));
        let u = g.constant(Tensor::vector(vec![3.0, 3.0, 3.0]));
        let uh = g.mul_scalar(u, 0.5).unwrap();
        let b1 = g.softmax(u).unwrap();
        let b2 = g.softmax(uh).unwrap();
        assert_eq!(g.value(b1), g.value(b2));
    }

    #[test]
    fn permuting_patches_with_positions_keeps_estimation_token() {
        let dim = 8;
        let (store, blocks) = build_blocks(dim, 2, 2, 7);
        let mut rng = Rng::new(8);
        let toks = random(&[4, dim], &mut rng, 1.0);
        let est = random(&[1, dim], &mut rng, 1.0);
        let pos = random(&[5, dim], &mut rng, 1.0);
        let perm = [2usize, 0, 3, 1];
        let permute = |t: &Tensor, offset: usize| {
            let mut d = t.data().to_vec();
            for (dst, &src) in perm.iter().enumerate() {
                d[(dst + offset) * dim..(dst + offset + 1) * dim]
                    .copy_from_slice(&t.data()[(src + offset) * dim..(src + offset + 1) * dim]);
            }
            Tensor::new(t.shape().to_vec(), d).unwrap()
        };
        let run = |toks: Tensor, pos: Tensor| {
            let mut g = Graph::new();
            let p = store.bind(&mut g, false);
            let tv = g.constant(toks);
            let ev = g.constant(est.clone());
            let pv = g.constant(pos);
            let z0 = prepend_estimation_token(&mut g, tv, ev, pv).unwrap();
            let (z, _) = encoder_forward(&mut g, &p, &blocks, z0).unwrap();
            g.value(z)[..dim].to_vec()
        };
        let a = run(toks.clone(), pos.clone());
        let b = run(permute(&toks, 0), permute(&pos, 1));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn one_block_encoder_gradient() {
        let dim = 8;
        let (store, blocks) = build_blocks(dim, 2, 1, 9);
        let mut rng = Rng::new(10);
        let x = random(&[3, dim], &mut rng, 1.0);
        let mut inputs: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
        // perturb LN params away from the trivial init
        for t in inputs.iter_mut() {
            for v in t.data_mut() {
                *v += rng.normal() * 0.1;
            }
        }
        inputs.push(x);
        let err = grad_check_inputs(
            |g, xs| {
                let p = Bound::from_vars(xs[..xs.len() - 1].to_vec());
                let (z, _) = encoder_forward(g, &p, &blocks, xs[xs.len() - 1])?;
                let w = g.constant(Tensor::vector((0..dim).map(|i| 0.3 + 0.1 * i as f64).collect()));
                let zw = g.mul(z, w)?;
                let sq = g.square(zw)?;
                g.sum(sq)
            },
            &inputs,
            &GradCheckOptions {
                eps: 1e-5,
                max_coords: Some(60),
                seed: 1,
            },
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }
}
