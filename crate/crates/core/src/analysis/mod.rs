//! Evaluation: curve metrics, Logan analysis and rank tests.

mod logan;
mod metrics;
mod report;
mod stats;

pub use logan::{
    cumulative_integral, logan_vt, map_errors, ols, parametric_map, LoganResult, MapErrors, ParametricMap,
    DEFAULT_T_STAR,
};
pub use metrics::{iou, peak_bias, pearson, pearson_r, rmse, MetricsReport, SEGMENT_SPLIT_MIN};
pub use stats::{average_ranks, bonferroni, mann_whitney_u, wilcoxon_signed_rank};
pub use report::{
    aggregate, compare_cohorts, metric_values, write_aggregate_csv, AggregateRow, CohortTest, MetricsRow,
    AGGREGATE_HEADER,
};
