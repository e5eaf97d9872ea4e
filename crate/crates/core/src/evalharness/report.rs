use std::collections::BTreeMap;
use std::fmt::Write as _;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::matching::Counts;
use super::metrics::{
    alert_counts, alert_delays, delay_histogram, framewise_counts, median, percent, EvalWarning,
    Histogram, LatencyAccounting, DEFAULT_BIN_WIDTH_MS, DEFAULT_IOU_THRESHOLD,
};
use super::EvalError;
use crate::alertgate::Mode;
use crate::clipstore::Clip;
use crate::num::Scalar;
use crate::runlog::RunLog;

/// Dataset label used for clips that carry none.
pub const UNLABELLED: &str = "unlabelled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct EvalOptions<T> {
    pub iou_threshold: T,
    pub accounting: LatencyAccounting<T>,
    pub bin_width: T,
}

impl<T: Scalar> Default for EvalOptions<T> {
    fn default() -> Self {
        Self {
            iou_threshold: T::lit(DEFAULT_IOU_THRESHOLD),
            accounting: LatencyAccounting::default(),
            bin_width: T::lit(DEFAULT_BIN_WIDTH_MS),
        }
    }
}

/// Metrics of one clip under one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ClipResult<T> {
    pub clip_id: String,
    pub dataset: String,
    pub mode: Mode,
    pub counts: Counts,
    pub persons: u64,
    pub alerted: u64,
    pub delays: Vec<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<EvalWarning<T>>,
}

pub fn evaluate_clip<T: Scalar>(
    run: &RunLog<T>,
    clip: &Clip<T>,
    opts: &EvalOptions<T>,
) -> Result<ClipResult<T>, EvalError> {
    let counts = framewise_counts(run, clip, opts.iou_threshold)?;
    let (alerted, persons) = alert_counts(run, clip)?;
    let delays = alert_delays(run, clip, &opts.accounting)?;
    Ok(ClipResult {
        clip_id: clip.clip_id.clone(),
        dataset: clip
            .dataset
            .clone()
            .unwrap_or_else(|| UNLABELLED.to_string()),
        mode: run.header.config.mode,
        counts,
        persons: persons as u64,
        alerted: alerted as u64,
        delays: delays.compensated(),
        warnings: delays.warnings,
    })
}

/// One (dataset, mode) cell of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct CellMetrics<T> {
    pub dataset: String,
    pub mode: Mode,
    pub clips: u64,
    pub counts: Counts,
    pub precision: T,
    pub recall: T,
    pub persons: u64,
    pub alerted: u64,
    pub alert_percent: T,
    pub delays: Vec<T>,
    pub median_delay: Option<T>,
    pub delay_histogram: Histogram<T>,
    pub negative_delays: u64,
}

/// The AVG row for one mode: unweighted mean of the dataset values, with
/// delays pooled across datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct AverageMetrics<T> {
    pub mode: Mode,
    pub datasets: u64,
    pub precision: T,
    pub recall: T,
    pub alert_percent: T,
    pub median_delay: Option<T>,
    pub delay_histogram: Histogram<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct MetricsReport<T> {
    pub options: EvalOptions<T>,
    pub datasets: Vec<String>,
    pub modes: Vec<Mode>,
    pub cells: Vec<CellMetrics<T>>,
    pub averages: Vec<AverageMetrics<T>>,
}

/// Unweighted mean; `None` for an empty slice.
pub fn unweighted_mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(T::zero(), |a, &b| a + b);
    Some(sum / T::lit(values.len() as f64))
}

/// Table column order.
fn mode_rank(m: Mode) -> usize {
    match m {
        Mode::Default => 0,
        Mode::Reactive => 1,
        Mode::Certain => 2,
    }
}

pub fn aggregate_report<T: Scalar>(
    results: &[ClipResult<T>],
    opts: &EvalOptions<T>,
) -> Result<MetricsReport<T>, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyCell {
            dataset: "*".into(),
            mode: "*".into(),
        });
    }
    let mut datasets: Vec<String> = results.iter().map(|r| r.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();
    let mut modes: Vec<Mode> = results.iter().map(|r| r.mode).collect();
    modes.sort_by_key(|&m| mode_rank(m));
    modes.dedup();

    let mut grouped: BTreeMap<(usize, &str), Vec<&ClipResult<T>>> = BTreeMap::new();
    for r in results {
        grouped
            .entry((mode_rank(r.mode), r.dataset.as_str()))
            .or_default()
            .push(r);
    }

    let mut cells = Vec::new();
    for &mode in &modes {
        for ds in &datasets {
            let group = grouped
                .get(&(mode_rank(mode), ds.as_str()))
                .ok_or_else(|| EvalError::EmptyCell {
                    dataset: ds.clone(),
                    mode: mode.to_string(),
                })?;
            let counts: Counts = group.iter().map(|r| r.counts).sum();
            let persons: u64 = group.iter().map(|r| r.persons).sum();
            let alerted: u64 = group.iter().map(|r| r.alerted).sum();
            let delays: Vec<T> = group
                .iter()
                .flat_map(|r| r.delays.iter().copied())
                .collect();
            let negative_delays = delays.iter().filter(|d| **d < T::zero()).count() as u64;
            cells.push(CellMetrics {
                dataset: ds.clone(),
                mode,
                clips: group.len() as u64,
                counts,
                precision: counts.precision(),
                recall: counts.recall(),
                persons,
                alerted,
                alert_percent: percent(alerted as usize, persons as usize),
                median_delay: median(&delays),
                delay_histogram: delay_histogram(&delays, opts.bin_width)?,
                delays,
                negative_delays,
            });
        }
    }

    let mut averages = Vec::new();
    for &mode in &modes {
        let row: Vec<&CellMetrics<T>> = cells.iter().filter(|c| c.mode == mode).collect();
        let col = |f: fn(&CellMetrics<T>) -> T| -> T {
            unweighted_mean(&row.iter().map(|c| f(c)).collect::<Vec<_>>()).expect("non-empty row")
        };
        let pooled: Vec<T> = row.iter().flat_map(|c| c.delays.iter().copied()).collect();
        averages.push(AverageMetrics {
            mode,
            datasets: row.len() as u64,
            precision: col(|c| c.precision),
            recall: col(|c| c.recall),
            alert_percent: col(|c| c.alert_percent),
            median_delay: median(&pooled),
            delay_histogram: delay_histogram(&pooled, opts.bin_width)?,
        });
    }

    Ok(MetricsReport {
        options: opts.clone(),
        datasets,
        modes,
        cells,
        averages,
    })
}

impl<T: Scalar> MetricsReport<T> {
    pub fn cell(&self, dataset: &str, mode: Mode) -> Option<&CellMetrics<T>> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.mode == mode)
    }

    pub fn average(&self, mode: Mode) -> Option<&AverageMetrics<T>> {
        self.averages.iter().find(|a| a.mode == mode)
    }

    /// Aligned text table: metric × dataset rows, one column per mode,
    /// followed by the pooled delay histogram of each mode.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Metric".to_string(), "Dataset".to_string()];
        header.extend(self.modes.iter().map(|m| title(m.as_str())));
        rows.push(header);

        type CellFmt<T> = fn(&CellMetrics<T>) -> String;
        type AvgFmt<T> = fn(&AverageMetrics<T>) -> String;
        let metrics: [(&str, CellFmt<T>, AvgFmt<T>); 4] = [
            (
                "Precision",
                |c| fixed(c.precision, 3),
                |a| fixed(a.precision, 3),
            ),
            ("Recall", |c| fixed(c.recall, 3), |a| fixed(a.recall, 3)),
            (
                "Alert %",
                |c| format!("{}%", fixed(c.alert_percent, 2)),
                |a| format!("{}%", fixed(a.alert_percent, 2)),
            ),
            (
                "Delay p50 (ms)",
                |c| c.median_delay.map_or("-".into(), |d| fixed(d, 1)),
                |a| a.median_delay.map_or("-".into(), |d| fixed(d, 1)),
            ),
        ];
        for (name, cell_fmt, avg_fmt) in metrics {
            for (i, ds) in self.datasets.iter().enumerate() {
                let mut row = vec![
                    if i == 0 {
                        name.to_string()
                    } else {
                        String::new()
                    },
                    ds.clone(),
                ];
                for &m in &self.modes {
                    row.push(self.cell(ds, m).map_or("-".into(), cell_fmt));
                }
                rows.push(row);
            }
            let mut row = vec![String::new(), "AVG".to_string()];
            for &m in &self.modes {
                row.push(self.average(m).map_or("-".into(), avg_fmt));
            }
            rows.push(row);
        }

        let ncol = rows[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, &w))| {
                    if i < 2 {
                        format!("{s:<w$}")
                    } else {
                        format!("{s:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }

        for a in &self.averages {
            let _ = writeln!(
                out,
                "\nDelay histogram, {} (bin {} ms, all datasets):",
                title(a.mode.as_str()),
                fixed(a.delay_histogram.bin_width, 0)
            );
            let w = a.delay_histogram.bin_width;
            for (&k, &n) in &a.delay_histogram.bins {
                let lo = w * T::lit(k as f64);
                let _ = writeln!(
                    out,
                    "  [{:>6}, {:>6})  {:>4}  {}",
                    fixed(lo, 0),
                    fixed(lo + w, 0),
                    n,
                    "#".repeat(n.min(60) as usize)
                );
            }
        }
        out
    }
}

fn fixed<T: Scalar>(v: T, places: usize) -> String {
    format!("{:.*}", places, v.to_f64_lossy())
}

fn title(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}
