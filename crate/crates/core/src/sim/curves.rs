//! Fine-grid blood and tissue curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SampledCurve, TimeGrid};

/// Curve on a uniform grid `t_i = i·dt`, linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FineCurve {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl FineCurve {
    pub fn from_fn(dt: f64, t_end: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = (t_end / dt).round() as usize + 1;
        FineCurve {
            dt,
            values: (0..n).map(|i| f(i as f64 * dt)).collect(),
        }
    }

    pub fn t_end(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().expect("non-empty curve");
        }
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn sample(&self, grid: &TimeGrid) -> SampledCurve {
        let values = grid.midpoints().iter().map(|&t| self.at(t)).collect();
        SampledCurve::new(grid.clone(), values).expect("one value per frame")
    }

    /// Trapezoid integral over the whole curve.
    pub fn integral(&self) -> f64 {
        let v = &self.values;
        if v.len() < 2 {
            return 0.0;
        }
        self.dt * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
    }

    pub fn scaled(&self, c: f64) -> Self {
        FineCurve {
            dt: self.dt,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Tri-exponential plasma input with a bolus delay.
///
/// `c(t) = (a1·s − a2 − a3)·e^{−l1·s} + a2·e^{−l2·s} + a3·e^{−l3·s}`, `s = t − delay`,
/// and zero for `t ≤ delay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FengAif {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub delay: f64,
}

impl FengAif {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.delay {
            return 0.0;
        }
        let s = t - self.delay;
        (self.a1 * s - self.a2 - self.a3) * (-self.l1 * s).exp()
            + self.a2 * (-self.l2 * s).exp()
            + self.a3 * (-self.l3 * s).exp()
    }
}

/// Fine-grid evaluation plus frame-midpoint samples. Rejects parameter sets
/// that go negative anywhere on the grid.
pub fn gen_aif(params: &FengAif, grid: &TimeGrid, fine_dt: f64) -> Result<(FineCurve, SampledCurve)> {
    if !(fine_dt > 0.0 && fine_dt <= 0.01) {
        return Err(Error::domain("gen_aif", format!("fine_dt {fine_dt} must be in (0, 0.01]")));
    }
    let fine = FineCurve::from_fn(fine_dt, grid.total(), |t| params.eval(t));
    if let Some(i) = fine.values.iter().position(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::domain(
            "gen_aif",
            format!("negative or non-finite input at t={:.3} min", i as f64 * fine_dt),
        ));
    }
    let sampled = fine.sample(grid);
    Ok((fine, sampled))
}

/// One-tissue response `K1 ∫ c_p(τ) e^{−k2(t−τ)} dτ`, integrated exactly for a
/// piecewise-linear input.
pub fn tissue_response(cp: &FineCurve, k1: f64, k2: f64) -> Result<FineCurve> {
    if !(k2 > 0.0) {
        return Err(Error::domain("tissue_tac", format!("k2 must be positive, got {k2}")));
    }
    let h = cp.dt;
    let decay = (-k2 * h).exp();
    // ∫_0^h (a + (b−a)s/h) e^{−k2(h−s)} ds = a·c0 + (b−a)·c1
    let c0 = (1.0 - decay) / k2;
    let c1 = (h / k2 - c0 / k2) / h;
    let mut out = Vec::with_capacity(cp.values.len());
    let mut ct = 0.0;
    out.push(0.0);
    for w in cp.values.windows(2) {
        let (a, b) = (w[0], w[1]);
        ct = ct * decay + k1 * (a * c0 + (b - a) * c1);
        out.push(ct);
    }
    Ok(FineCurve { dt: h, values: out })
}

/// Frame-sampled tissue curve.
pub fn tissue_tac(cp: &FineCurve, k1: f64, k2: f64, grid: &TimeGrid) -> Result<SampledCurve> {
    Ok(tissue_response(cp, k1, k2)?.sample(grid))
}

/// Lower clamp on the parent fraction.
pub const MIN_PARENT_FRACTION: f64 = 1e-3;

/// Whole-blood remainder (metabolites and cell-bound activity) for a
/// mono-exponentially decaying parent fraction.
pub fn metabolite_remainder(cp: &FineCurve, k_met: f64) -> Result<FineCurve> {
    if k_met < 0.0 {
        return Err(Error::domain("metabolite_remainder", "k_met must be non-negative"));
    }
    let values = cp
        .values
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let pf = (-k_met * i as f64 * cp.dt).exp().max(MIN_PARENT_FRACTION);
            c * (1.0 - pf) / pf
        })
        .collect();
    Ok(FineCurve { dt: cp.dt, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> FengAif {
        FengAif {
            a1: 800.0,
            a2: 20.0,
            a3: 20.0,
            l1: 4.0,
            l2: 0.1,
            l3: 0.01,
            delay: 0.5,
        }
    }

    #[test]
    fn zero_before_delay() {
        let p = reference();
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(0.5), 0.0);
        assert!(p.eval(0.51) > 0.0);
    }

    #[test]
    fn peak_near_inverse_rate() {
        let (fine, _) = gen_aif(&reference(), &TimeGrid::standard(), 0.001).unwrap();
        let (imax, _) = fine
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let t_peak = imax as f64 * 0.001;
        // the −(a2+a3) term pushes the stationary point to s = 0.3, just past 1/λ1
        assert!((t_peak - 0.75).abs() < 0.1, "peak at {t_peak}");
        assert!(fine.integral() > 0.0);
    }

    #[test]
    fn rejects_coarse_fine_grid() {
        assert!(gen_aif(&reference(), &TimeGrid::standard(), 0.05).is_err());
    }

    #[test]
    fn tissue_linearity_and_zero_input() {
        let (fine, _) = gen_aif(&reference(), &TimeGrid::standard(), 0.01).unwrap();
        let a = tissue_response(&fine, 0.1, 0.05).unwrap();
        let b = tissue_response(&fine, 0.2, 0.05).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        let zero = FineCurve { dt: 0.01, values: vec![0.0; 100] };
        assert!(tissue_response(&zero, 0.1, 0.05).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(tissue_response(&fine, 0.1, 0.0).is_err());
    }

    #[test]
    fn impulse_response_is_exponential() {
        let dt = 1e-4;
        let (k1, k2) = (0.3, 0.1);
        let n = (20.0 / dt) as usize;
        let mut values = vec![0.0; n];
        values[0] = 2.0 / dt; // triangle of unit area on [0, dt]
        let cp = FineCurve { dt, values };
        let ct = tissue_response(&cp, k1, k2).unwrap();
        let t = 1.0 / k2;
        let expected = k1 * (-1.0f64).exp();
        assert!((ct.at(t) - expected).abs() / expected < 1e-4);
    }

    #[test]
    fn metabolite_examples() {
        let cp = FineCurve::from_fn(0.01, 90.0, |_| 2.0);
        let none = metabolite_remainder(&cp, 0.0).unwrap();
        assert!(none.values.iter().all(|&v| v == 0.0));
        let k = 0.02;
        let r = metabolite_remainder(&cp, k).unwrap();
        let t_half = 2f64.ln() / k;
        assert!((r.at(t_half) / 2.0 - 1.0).abs() < 1e-3);
        let ratio = r.at(30.0) / 2.0;
        let expected = (1.0 - (-0.6f64).exp()) / (-0.6f64).exp();
        assert!((ratio - expected).abs() < 1e-9);
        assert!((expected - 0.822).abs() < 1e-3);
    }
}
