use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Probe at most this many coordinates per input (chosen with `seed`);
    /// `None` checks every coordinate.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|)
/// for a scalar function of one input tensor.
pub fn grad_check<F>(f: F, x0: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_inputs(
        |g, xs| f(g, xs[0]),
        std::slice::from_ref(x0),
        &GradCheckOptions {
            eps,
            ..Default::default()
        },
    )
}

/// Multi-input variant; every input is registered as a trainable leaf.
pub fn grad_check_inputs<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&opts.eps) {
        return Err(Error::domain(
            "grad_check",
            format!("eps {} outside [1e-7, 1e-3]", opts.eps),
        ));
    }
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.scalar(out);
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check forward value".into()));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let out = f(&mut g, &vars)?;
    if !g.scalar(out).is_finite() {
        return Err(Error::NonFinite("grad_check forward value".into()));
    }
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).map(|s| s.to_vec()).unwrap_or_default())
        .collect();

    let mut rng = Rng::new(opts.seed);
    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (idx, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => (0..m).map(|_| rng.below(n)).collect(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let orig = input.data()[c];
            probe[idx].data_mut()[c] = orig + opts.eps;
            let fp = eval(&probe)?;
            probe[idx].data_mut()[c] = orig - opts.eps;
            let fm = eval(&probe)?;
            probe[idx].data_mut()[c] = orig;
            let numeric = (fp - fm) / (2.0 * opts.eps);
            let err = (analytic[idx][c] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}


/// Worst relative error of one primitive over its random cases.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PrimitiveCheck {
    pub name: &'static str,
    pub cases: usize,
    pub max_err: f64,
}

type Build = fn(&mut Graph, &[Var]) -> Result<Var>;

/// (name, input shapes, value range, kink gap, builder)
type Case = (&'static str, Vec<Vec<usize>>, (f64, f64), f64, Build);

/// Random tensor with entries in `[lo, hi]`, kept at least `gap` away from 0
/// so kinks (relu, abs) are not straddled by the difference stencil.
fn random_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64, gap: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = rng.uniform_range(lo, hi);
            if v.abs() >= gap {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Gradient checks of every graph primitive on `cases` random inputs each.
/// Outputs are reduced with a fixed random weighting so every output
/// coordinate contributes a distinct gradient.
pub fn primitive_suite(cases: usize, seed: u64) -> Result<Vec<PrimitiveCheck>> {
    let table: Vec<Case> = vec![
        ("add", vec![vec![3, 4], vec![3, 4]], (-2.0, 2.0), 0.0, |g, x| g.add(x[0], x[1])),
        ("add_broadcast", vec![vec![3, 4], vec![4]], (-2.0, 2.0), 0.0, |g, x| g.add(x[0], x[1])),
        ("sub", vec![vec![2, 5], vec![2, 5]], (-2.0, 2.0), 0.0, |g, x| g.sub(x[0], x[1])),
        ("sub_broadcast", vec![vec![1], vec![2, 5]], (-2.0, 2.0), 0.0, |g, x| g.sub(x[0], x[1])),
        ("mul", vec![vec![3, 3], vec![3, 3]], (-2.0, 2.0), 0.0, |g, x| g.mul(x[0], x[1])),
        ("mul_broadcast", vec![vec![2, 3, 4], vec![3, 4]], (-2.0, 2.0), 0.0, |g, x| g.mul(x[0], x[1])),
        ("div", vec![vec![4], vec![4]], (0.5, 2.0), 0.0, |g, x| g.div(x[0], x[1])),
        ("exp", vec![vec![5]], (-2.0, 2.0), 0.0, |g, x| g.exp(x[0])),
        ("log", vec![vec![5]], (0.2, 3.0), 0.0, |g, x| g.log(x[0])),
        ("sqrt", vec![vec![5]], (0.2, 3.0), 0.0, |g, x| g.sqrt(x[0])),
        ("relu", vec![vec![6]], (-2.0, 2.0), 1e-2, |g, x| g.relu(x[0])),
        ("sigmoid", vec![vec![6]], (-4.0, 4.0), 0.0, |g, x| g.sigmoid(x[0])),
        ("gelu", vec![vec![6]], (-3.0, 3.0), 0.0, |g, x| g.gelu(x[0])),
        ("abs", vec![vec![6]], (-2.0, 2.0), 1e-2, |g, x| g.abs(x[0])),
        ("square", vec![vec![6]], (-2.0, 2.0), 0.0, |g, x| g.square(x[0])),
        ("neg", vec![vec![6]], (-2.0, 2.0), 0.0, |g, x| g.neg(x[0])),
        ("add_scalar", vec![vec![6]], (-2.0, 2.0), 0.0, |g, x| g.add_scalar(x[0], 0.7)),
        ("mul_scalar", vec![vec![6]], (-2.0, 2.0), 0.0, |g, x| g.mul_scalar(x[0], -1.3)),
        ("matmul", vec![vec![3, 4], vec![4, 2]], (-1.0, 1.0), 0.0, |g, x| g.matmul(x[0], x[1])),
        ("transpose", vec![vec![3, 4]], (-1.0, 1.0), 0.0, |g, x| g.transpose(x[0])),
        ("reshape", vec![vec![3, 4]], (-1.0, 1.0), 0.0, |g, x| g.reshape(x[0], &[2, 6])),
        ("concat", vec![vec![2, 3], vec![4, 3]], (-1.0, 1.0), 0.0, |g, x| g.concat(&[x[0], x[1]], 0)),
        ("slice", vec![vec![4, 5]], (-1.0, 1.0), 0.0, |g, x| g.slice(x[0], 1, 1, 4)),
        ("sum", vec![vec![3, 4]], (-1.0, 1.0), 0.0, |g, x| g.sum(x[0])),
        ("mean", vec![vec![3, 4]], (-1.0, 1.0), 0.0, |g, x| g.mean(x[0])),
        ("sum_axis", vec![vec![3, 4]], (-1.0, 1.0), 0.0, |g, x| g.sum_axis(x[0], 0)),
        ("mean_axis", vec![vec![3, 4]], (-1.0, 1.0), 0.0, |g, x| g.mean_axis(x[0], 1)),
        ("softmax", vec![vec![3, 5]], (-3.0, 3.0), 0.0, |g, x| g.softmax(x[0])),
        ("normalize", vec![vec![3, 6]], (-2.0, 2.0), 0.0, |g, x| g.normalize(x[0], 1e-5)),
    ];
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(table.len());
    for (name, shapes, (lo, hi), gap, build) in table {
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let mut inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s, lo, hi, gap)).collect();
            // probe the output shape once to size the weighting
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
            let y = build(&mut g, &vars)?;
            let weights = random_tensor(&mut rng, g.shape(y), -1.0, 1.0, 0.0);
            inputs.push(weights);
            let err = grad_check_inputs(
                |g, xs| {
                    let y = build(g, &xs[..xs.len() - 1])?;
                    let wy = g.mul(y, xs[xs.len() - 1])?;
                    g.sum(wy)
                },
                &inputs,
                &GradCheckOptions::default(),
            )?;
            worst = worst.max(err);
        }
        out.push(PrimitiveCheck {
            name,
            cases,
            max_err: worst,
        });
    }
    Ok(out)
}
