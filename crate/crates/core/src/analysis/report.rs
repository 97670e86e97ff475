//! Per-subject metric rows, cohort aggregates and cohort comparisons.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::stats::{bonferroni, mann_whitney_u};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub subject: String,
    pub cohort: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

pub const AGGREGATE_HEADER: &str = "method,cohort,r,iou_early,iou_late,rmse_early,rmse_late,peak_bias";

/// Column order of [`AGGREGATE_HEADER`] after the two key columns.
pub fn metric_values(m: &MetricsReport) -> [f64; 6] {
    [m.r, m.iou_early, m.iou_late, m.rmse_early, m.rmse_late, m.peak_bias]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub cohort: String,
    pub n: usize,
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

/// Means and sample standard deviations per (method, cohort), plus an
/// `all` cohort per method. Rows are sorted by method, then cohort.
pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String), Vec<[f64; 6]>> = BTreeMap::new();
    for r in rows {
        let v = metric_values(&r.metrics);
        groups.entry((r.method.clone(), r.cohort.clone())).or_default().push(v);
        groups.entry((r.method.clone(), "all".into())).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|((method, cohort), vals)| {
            let n = vals.len();
            let mut mean = [0.0; 6];
            let mut std = [0.0; 6];
            for j in 0..6 {
                mean[j] = vals.iter().map(|v| v[j]).sum::<f64>() / n as f64;
                if n > 1 {
                    let ss: f64 = vals.iter().map(|v| (v[j] - mean[j]).powi(2)).sum();
                    std[j] = (ss / (n - 1) as f64).sqrt();
                }
            }
            AggregateRow {
                method,
                cohort,
                n,
                mean,
                std,
            }
        })
        .collect()
}

/// Writes means (`std = false`) or standard deviations in the aggregate layout.
pub fn write_aggregate_csv<W: Write>(out: &mut W, rows: &[AggregateRow], std: bool) -> std::io::Result<()> {
    writeln!(out, "{AGGREGATE_HEADER}")?;
    for r in rows {
        let v = if std { &r.std } else { &r.mean };
        writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            csv_field(&r.method),
            csv_field(&r.cohort),
            v[0],
            v[1],
            v[2],
            v[3],
            v[4],
            v[5]
        )?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTest {
    pub quantity: String,
    pub p: f64,
    pub p_bonferroni: f64,
}

/// Mann-Whitney comparisons of two cohorts on several per-subject quantities,
/// Bonferroni-corrected over the number of quantities.
pub fn compare_cohorts(quantities: &[(&str, Vec<f64>, Vec<f64>)]) -> Result<Vec<CohortTest>> {
    let m = quantities.len();
    quantities
        .iter()
        .map(|(name, a, b)| {
            let p = mann_whitney_u(a, b)?;
            Ok(CohortTest {
                quantity: name.to_string(),
                p,
                p_bonferroni: bonferroni(p, m),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, cohort: &str, r: f64) -> MetricsRow {
        MetricsRow {
            method: method.into(),
            subject: "s".into(),
            cohort: cohort.into(),
            metrics: MetricsReport {
                r,
                iou_early: 1.0,
                iou_late: 1.0,
                rmse_early: 0.0,
                rmse_late: 0.0,
                peak_bias: 0.0,
            },
        }
    }

    #[test]
    fn aggregates_by_method_and_cohort() {
        let rows = vec![row("a", "HAB-like", 1.0), row("a", "MAB-like", 0.5), row("a", "HAB-like", 0.0)];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 3);
        let all = agg.iter().find(|r| r.cohort == "all").unwrap();
        assert_eq!(all.n, 3);
        assert_eq!(all.mean[0], 0.5);
        let hab = agg.iter().find(|r| r.cohort == "HAB-like").unwrap();
        assert!((hab.std[0] - 0.5f64.sqrt()).abs() < 1e-15);
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &agg, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(AGGREGATE_HEADER));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn metrics_row_json_is_flat() {
        let j = serde_json::to_value(row("m", "c", 0.9)).unwrap();
        assert_eq!(j["r"], 0.9);
        assert_eq!(j["method"], "m");
    }
}
