use super::kernels::{self, split_axis};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    None,
    /// The right operand repeats over the leading dims of the left.
    Rhs,
    /// The left operand repeats over the leading dims of the right.
    Lhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnKind {
    Exp,
    Log,
    Sqrt,
    Relu,
    Sigmoid,
    Gelu,
    Abs,
    Square,
    Neg,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary {
        kind: BinKind,
        a: Var,
        b: Var,
        bcast: Bcast,
    },
    Unary {
        kind: UnKind,
        x: Var,
    },
    AddScalar(Var),
    MulScalar(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    SumAxis {
        x: Var,
        axis: usize,
    },
    Softmax(Var),
    /// Zero-mean unit-variance over the last axis (layer norm without affine).
    Normalize {
        x: Var,
        inv_std: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
    /// Persistent accumulator; only leaves that require grad carry one.
    grad: Option<Vec<f64>>,
}

/// Recording tape. Nodes are appended in evaluation order, so parents always
/// precede children and a reverse sweep is a valid topological order.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        let n = t.numel();
        let Tensor { shape, data } = t;
        let v = self.push(shape, data, Op::Leaf, true);
        self.nodes[v.0].grad = Some(vec![0.0; n]);
        v
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let Tensor { shape, data } = t;
        self.push(shape, data, Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor {
            shape: n.shape.clone(),
            data: n.value.clone(),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = n.grad.as_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    // ----- elementwise binary with leading-dim broadcast -----

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<(Bcast, Vec<usize>)> {
        let sa = &self.node(a).shape;
        let sb = &self.node(b).shape;
        let na = self.node(a).value.len();
        let nb = self.node(b).value.len();
        if sa == sb {
            return Ok((Bcast::None, sa.clone()));
        }
        let is_suffix = |small: &[usize], big: &[usize]| {
            small.len() <= big.len() && big[big.len() - small.len()..] == *small
        };
        if nb == 1 || is_suffix(sb, sa) {
            Ok((Bcast::Rhs, sa.clone()))
        } else if na == 1 || is_suffix(sa, sb) {
            Ok((Bcast::Lhs, sb.clone()))
        } else {
            Err(Error::Shape {
                op,
                lhs: sa.clone(),
                rhs: sb.clone(),
            })
        }
    }

    fn binary(&mut self, kind: BinKind, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
            BinKind::Div => "div",
        };
        let (bcast, shape) = self.broadcast(name, a, b)?;
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let n: usize = shape.iter().product();
        let f = |x: f64, y: f64| match kind {
            BinKind::Add => x + y,
            BinKind::Sub => x - y,
            BinKind::Mul => x * y,
            BinKind::Div => x / y,
        };
        let value: Vec<f64> = match bcast {
            Bcast::None => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::Rhs => {
                let nb = bv.len();
                (0..n).map(|i| f(av[i], bv[i % nb])).collect()
            }
            Bcast::Lhs => {
                let na = av.len();
                (0..n).map(|i| f(av[i % na], bv[i])).collect()
            }
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, Op::Binary { kind, a, b, bcast }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Div, a, b)
    }

    // ----- unary -----

    fn unary(&mut self, kind: UnKind, x: Var) -> Result<Var> {
        let xv = &self.node(x).value;
        match kind {
            UnKind::Log if xv.iter().any(|&v| v < 0.0) => {
                return Err(Error::domain("log", "negative input"));
            }
            UnKind::Sqrt if xv.iter().any(|&v| v < 0.0) => {
                return Err(Error::domain("sqrt", "negative input"));
            }
            _ => {}
        }
        let value: Vec<f64> = xv
            .iter()
            .map(|&v| match kind {
                UnKind::Exp => v.exp(),
                UnKind::Log => v.ln(),
                UnKind::Sqrt => v.sqrt(),
                UnKind::Relu => v.max(0.0),
                UnKind::Sigmoid => kernels::sigmoid(v),
                UnKind::Gelu => kernels::gelu(v),
                UnKind::Abs => v.abs(),
                UnKind::Square => v * v,
                UnKind::Neg => -v,
            })
            .collect();
        let shape = self.node(x).shape.clone();
        let rg = self.rg(x);
        Ok(self.push(shape, value, Op::Unary { kind, x }, rg))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Log, x)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Sqrt, x)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Sigmoid, x)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Gelu, x)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Abs, x)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Square, x)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(UnKind::Neg, x)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let value = self.node(x).value.iter().map(|v| v + c).collect();
        let shape = self.node(x).shape.clone();
        let rg = self.rg(x);
        Ok(self.push(shape, value, Op::AddScalar(x), rg))
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let value = self.node(x).value.iter().map(|v| v * c).collect();
        let shape = self.node(x).shape.clone();
        let rg = self.rg(x);
        Ok(self.push(shape, value, Op::MulScalar(x, c), rg))
    }

    // ----- linear algebra and layout -----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.node(a).shape.clone();
        let sb = self.node(b).shape.clone();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let value = kernels::matmul(&self.node(a).value, &self.node(b).value, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.node(x).shape.clone();
        if s.len() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                lhs: s,
                rhs: vec![],
            });
        }
        let value = kernels::transpose(&self.node(x).value, s[0], s[1]);
        let rg = self.rg(x);
        Ok(self.push(vec![s[1], s[0]], value, Op::Transpose(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = self.node(x).value.len();
        if shape.iter().product::<usize>() != n {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.node(x).shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let value = self.node(x).value.clone();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x), rg))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::domain("concat", "no inputs"))?;
        let base = self.node(*first).shape.clone();
        if axis >= base.len() {
            return Err(Error::domain("concat", format!("axis {axis} out of range")));
        }
        let mut total = 0;
        for &p in parts {
            let s = &self.node(p).shape;
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: base,
                    rhs: s.clone(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut value = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let d = self.node(p).shape[axis];
                let src = &self.node(p).value;
                value.extend_from_slice(&src[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            shape,
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.node(x).shape.clone();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(Error::domain(
                "slice",
                format!("range {start}..{end} on axis {axis} of shape {s:?}"),
            ));
        }
        let (outer, d, inner) = split_axis(&s, axis);
        let len = end - start;
        let src = &self.node(x).value;
        let mut value = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * d * inner;
            value.extend_from_slice(&src[base + start * inner..base + end * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(shape, value, Op::Slice { x, axis, start }, rg))
    }

    // ----- reductions -----

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = vec![self.node(x).value.iter().sum()];
        let rg = self.rg(x);
        Ok(self.push(vec![1], value, Op::Sum(x), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.node(x).value.len() as f64;
        let s = self.sum(x)?;
        self.mul_scalar(s, 1.0 / n)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.node(x).shape.clone();
        if axis >= s.len() {
            return Err(Error::domain("sum_axis", format!("axis {axis} of {s:?}")));
        }
        let (outer, d, inner) = split_axis(&s, axis);
        let src = &self.node(x).value;
        let mut value = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..d {
                let row = &src[(o * d + k) * inner..(o * d + k + 1) * inner];
                for (acc, v) in value[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let mut shape = s;
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(x);
        Ok(self.push(shape, value, Op::SumAxis { x, axis }, rg))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let d = *self
            .node(x)
            .shape
            .get(axis)
            .ok_or_else(|| Error::domain("mean_axis", "axis out of range"))?;
        let s = self.sum_axis(x, axis)?;
        self.mul_scalar(s, 1.0 / d as f64)
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.node(x).shape.clone();
        let d = *s.last().ok_or_else(|| Error::domain("softmax", "empty shape"))?;
        let src = &self.node(x).value;
        let mut value = vec![0.0; src.len()];
        for (row_in, row_out) in src.chunks(d).zip(value.chunks_mut(d)) {
            let m = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - m).exp();
                z += *o;
            }
            for o in row_out.iter_mut() {
                *o /= z;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(s, value, Op::Softmax(x), rg))
    }

    /// Per-row standardization over the last axis: (x - mean) / sqrt(var + eps).
    pub fn normalize(&mut self, x: Var, eps: f64) -> Result<Var> {
        let s = self.node(x).shape.clone();
        let d = *s
            .last()
            .ok_or_else(|| Error::domain("normalize", "empty shape"))?;
        let src = &self.node(x).value;
        let rows = src.len() / d;
        let mut value = vec![0.0; src.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for (row_in, row_out) in src.chunks(d).zip(value.chunks_mut(d)) {
            let mean = row_in.iter().sum::<f64>() / d as f64;
            let var = row_in.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(x);
        Ok(self.push(s, value, Op::Normalize { x, inv_std }, rg))
    }

    // ----- reverse sweep -----

    /// Accumulates d(root)/d(leaf) into every reachable trainable leaf.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.node(root).value.len() != 1 {
            return Err(Error::domain(
                "backward",
                format!("root must be scalar, got shape {:?}", self.node(root).shape),
            ));
        }
        if !self.rg(root) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                if let Some(acc) = self.nodes[i].grad.as_mut() {
                    for (a, v) in acc.iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let n = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Binary { kind, a, b, bcast } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (na, nb) = (av.len(), bv.len());
                let ia = |k: usize| if *bcast == Bcast::Lhs { k % na } else { k };
                let ib = |k: usize| if *bcast == Bcast::Rhs { k % nb } else { k };
                acc(*a, &mut |ga| {
                    for (k, gk) in g.iter().enumerate() {
                        let d = match kind {
                            BinKind::Add | BinKind::Sub => 1.0,
                            BinKind::Mul => bv[ib(k)],
                            BinKind::Div => 1.0 / bv[ib(k)],
                        };
                        ga[ia(k)] += gk * d;
                    }
                });
                acc(*b, &mut |gb| {
                    for (k, gk) in g.iter().enumerate() {
                        let d = match kind {
                            BinKind::Add => 1.0,
                            BinKind::Sub => -1.0,
                            BinKind::Mul => av[ia(k)],
                            BinKind::Div => {
                                let y = bv[ib(k)];
                                -av[ia(k)] / (y * y)
                            }
                        };
                        gb[ib(k)] += gk * d;
                    }
                });
            }
            Op::Unary { kind, x } => {
                let xv = &self.nodes[x.0].value;
                let yv = &node.value;
                acc(*x, &mut |gx| {
                    for k in 0..g.len() {
                        let d = match kind {
                            UnKind::Exp => yv[k],
                            UnKind::Log => 1.0 / xv[k],
                            UnKind::Sqrt => 0.5 / yv[k],
                            UnKind::Relu => {
                                if xv[k] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            UnKind::Sigmoid => yv[k] * (1.0 - yv[k]),
                            UnKind::Gelu => kernels::gelu_grad(xv[k]),
                            UnKind::Abs => {
                                if xv[k] > 0.0 {
                                    1.0
                                } else if xv[k] < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            UnKind::Square => 2.0 * xv[k],
                            UnKind::Neg => -1.0,
                        };
                        gx[k] += g[k] * d;
                    }
                });
            }
            Op::AddScalar(x) | Op::Reshape(x) => acc(*x, &mut |gx| {
                for (a, v) in gx.iter_mut().zip(g) {
                    *a += v;
                }
            }),
            Op::MulScalar(x, c) => acc(*x, &mut |gx| {
                for (a, v) in gx.iter_mut().zip(g) {
                    *a += v * c;
                }
            }),
            Op::MatMul(a, b) => {
                let sa = &self.nodes[a.0].shape;
                let sb = &self.nodes[b.0].shape;
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                // dA = dC · Bᵀ, dB = Aᵀ · dC
                acc(*a, &mut |ga| kernels::matmul_nt_acc(ga, g, bv, m, n, k));
                acc(*b, &mut |gb| kernels::matmul_tn_acc(gb, av, g, m, k, n));
            }
            Op::Transpose(x) => {
                let s = &node.shape;
                let gt = kernels::transpose(g, s[0], s[1]);
                acc(*x, &mut |gx| {
                    for (a, v) in gx.iter_mut().zip(&gt) {
                        *a += v;
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(&node.shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let d = self.nodes[p.0].shape[*axis];
                    acc(p, &mut |gp| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + d) * inner];
                            for (a, v) in gp[o * d * inner..(o + 1) * d * inner].iter_mut().zip(src) {
                                *a += v;
                            }
                        }
                    });
                    offset += d;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, d, inner) = split_axis(&self.nodes[x.0].shape, *axis);
                let len = node.shape[*axis];
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        let dst = &mut gx[(o * d + start) * inner..(o * d + start + len) * inner];
                        for (a, v) in dst.iter_mut().zip(&g[o * len * inner..(o + 1) * len * inner]) {
                            *a += v;
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |gx| {
                for a in gx.iter_mut() {
                    *a += g[0];
                }
            }),
            Op::SumAxis { x, axis } => {
                let (outer, d, inner) = split_axis(&self.nodes[x.0].shape, *axis);
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for k in 0..d {
                            let dst = &mut gx[(o * d + k) * inner..(o * d + k + 1) * inner];
                            for (a, v) in dst.iter_mut().zip(src) {
                                *a += v;
                            }
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let d = *node.shape.last().unwrap_or(&1);
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for ((gr, yr), out) in g.chunks(d).zip(y.chunks(d)).zip(gx.chunks_mut(d)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gi), yi) in out.iter_mut().zip(gr).zip(yr) {
                            *o += yi * (gi - dot);
                        }
                    }
                });
            }
            Op::Normalize { x, inv_std } => {
                let d = *node.shape.last().unwrap_or(&1);
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for (r, ((gr, yr), out)) in
                        g.chunks(d).zip(y.chunks(d)).zip(gx.chunks_mut(d)).enumerate()
                    {
                        let mg = gr.iter().sum::<f64>() / d as f64;
                        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for ((o, gi), yi) in out.iter_mut().zip(gr).zip(yr) {
                            *o += inv_std[r] * (gi - mg - yi * mgy);
                        }
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let i = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let c = g.matmul(a, i).unwrap();
        assert_eq!(g.value(c), &[1., 2., 3., 4.]);
    }

    #[test]
    fn softmax_symmetric() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[0., 0.]));
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y), &[0.5, 0.5]);
    }

    #[test]
    fn relu_subgradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[-1., 2.]));
        let r = g.relu(x).unwrap();
        let s = g.sum(r).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0., 1.]);
    }

    #[test]
    fn relu_and_abs_zero_subgradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[1], &[0.]));
        let r = g.relu(x).unwrap();
        let a = g.abs(x).unwrap();
        let s = g.add(r, a).unwrap();
        let s = g.sum(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.]);
    }

    #[test]
    fn square_sum_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1., 2., 3.]));
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2., 4., 6.]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1., 2., 3.]));
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        let first = g.grad(x).unwrap().to_vec();
        g.backward(s).unwrap();
        let second = g.grad(x).unwrap();
        for (a, b) in first.iter().zip(second) {
            assert_eq!(2.0 * a, *b);
        }
        g.zero_grad();
        assert!(g.grad(x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1., 2.]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([3, 2]));
        let err = g.add(a, b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
        let err = g.matmul(a, a).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
    }

    #[test]
    fn log_and_sqrt_reject_negative() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[1., -1.]));
        assert!(g.log(x).is_err());
        assert!(g.sqrt(x).is_err());
    }

    #[test]
    fn bias_broadcast_sums_over_rows() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]));
        let b = g.param(t(&[2], &[10., 20.]));
        let y = g.add(x, b).unwrap();
        assert_eq!(g.value(y), &[11., 22., 13., 24., 15., 26.]);
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap(), &[3., 3.]);
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = g.constant(t(&[2, 1], &[9., 8.]));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 3]);
        assert_eq!(g.value(c), &[1., 2., 9., 3., 4., 8.]);
        let s = g.slice(c, 1, 2, 3).unwrap();
        assert_eq!(g.value(s), &[9., 8.]);
        let r = g.concat(&[a, a], 0).unwrap();
        assert_eq!(g.shape(r), &[4, 2]);
    }

    #[test]
    fn sum_axis_values() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let r0 = g.sum_axis(a, 0).unwrap();
        let r1 = g.sum_axis(a, 1).unwrap();
        assert_eq!(g.value(r0), &[5., 7., 9.]);
        assert_eq!(g.value(r1), &[6., 15.]);
    }

    #[test]
    fn normalize_zero_mean_unit_var() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 4], &[1., 2., 3., 4., -3., 0., 7., 100.]));
        let n = g.normalize(a, 0.0).unwrap();
        for row in g.value(n).chunks(4) {
            let m: f64 = row.iter().sum::<f64>() / 4.0;
            let v: f64 = row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_is_overflow_safe() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[-1000., 1000.]));
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y), &[0.0, 1.0]);
    }
}
