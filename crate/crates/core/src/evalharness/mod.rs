//! Frame-wise precision/recall, per-person alert rate and compensated alert
//! delay, computed from a [`RunLog`](crate::runlog::RunLog) against the clip
//! ground truth, plus the per-dataset report.

mod matching;
mod metrics;
mod report;
mod sweep;

use thiserror::Error;

pub use matching::{match_boxes, match_frame, Counts};
pub use metrics::{
    alert_counts, alert_delays, alert_percent, attribute_alerts, delay_histogram, framewise_counts,
    framewise_pr, median, person_instances, Attribution, DelayReport, EvalWarning, Histogram,
    LatencyAccounting, PersonDelay, PersonKey, DEFAULT_BIN_WIDTH_MS, DEFAULT_IOU_THRESHOLD,
    HARNESS_ROUND_TRIP_MS, SENSING_LATENCY_MS,
};
pub use report::{
    aggregate_report, evaluate_clip, unweighted_mean, AverageMetrics, CellMetrics, ClipResult,
    EvalOptions, MetricsReport, UNLABELLED,
};
pub use sweep::{sweep_clips, sweep_report, SweepError, SweepOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("run does not match clip: {0}")]
    ClipMismatch(String),
    #[error("no clips for dataset {dataset} under mode {mode}")]
    EmptyCell { dataset: String, mode: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
