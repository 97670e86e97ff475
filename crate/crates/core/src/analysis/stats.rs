//! Rank tests with normal approximations.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Average ranks (1-based) and the tie-correction sum Σ(t³ − t).
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Two-sided p for a statistic with given mean and variance, continuity-corrected.
fn two_sided(stat: f64, mean: f64, var: f64) -> f64 {
    if !(var > 0.0) {
        return 1.0;
    }
    let dev = ((stat - mean).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Paired two-sided test; zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain("wilcoxon", "paired samples differ in length"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Err(Error::domain("wilcoxon", "all differences are zero"));
    }
    if d.len() < 6 {
        return Err(Error::domain(
            "wilcoxon",
            format!("{} non-zero differences, need at least 6", d.len()),
        ));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let n = d.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    Ok(two_sided(w_plus, mean, var))
}

/// Independent-samples two-sided test.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("mann_whitney", "empty group"));
    }
    if x.len() < 3 || y.len() < 3 {
        return Err(Error::domain("mann_whitney", "each group needs at least 3 samples"));
    }
    let all: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = average_ranks(&all);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let r1: f64 = ranks[..x.len()].iter().sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    Ok(two_sided(u1, mean, var))
}

/// Bonferroni-adjusted p for `m` comparisons.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}
