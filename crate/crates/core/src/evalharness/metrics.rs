use std::collections::{BTreeMap, BTreeSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::matching::{match_frame, Counts};
use super::EvalError;
use crate::clipstore::{Clip, DetectionClass, GroundTruthPerson};
use crate::geom::Rect;
use crate::num::Scalar;
use crate::runlog::{CaptureMode, RunEvent, RunLog, RunNode};
use crate::tracker::Track;

pub const HARNESS_ROUND_TRIP_MS: f64 = 83.0;
pub const SENSING_LATENCY_MS: f64 = 67.0;
pub const DEFAULT_BIN_WIDTH_MS: f64 = 200.0;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct LatencyAccounting<T> {
    /// Host↔device round trip removed from harness-loop captures, ms.
    pub harness_round_trip: T,
    /// Camera sensing latency added to every delay, ms.
    pub sensing_latency: T,
    /// Add the one-way mesh latency of the earliest delivery.
    pub include_mesh: bool,
}

impl<T: Scalar> Default for LatencyAccounting<T> {
    fn default() -> Self {
        Self {
            harness_round_trip: T::lit(HARNESS_ROUND_TRIP_MS),
            sensing_latency: T::lit(SENSING_LATENCY_MS),
            include_mesh: false,
        }
    }
}

impl<T: Scalar> LatencyAccounting<T> {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.harness_round_trip >= T::zero()) || !(self.sensing_latency >= T::zero()) {
            return Err(EvalError::InvalidParams(
                "latency accounting values must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Applies the capture-specific correction to a raw delay.
    pub fn compensate(&self, raw: T, capture: CaptureMode) -> T {
        match capture {
            CaptureMode::Internal => raw + self.sensing_latency,
            CaptureMode::HarnessLoop => raw - self.harness_round_trip + self.sensing_latency,
        }
    }
}

/// A ground-truth person, identified by clip node and person id. Replicas of
/// the same stream share the key, so an alert on any replica credits the
/// person once.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
pub struct PersonKey {
    pub node_id: String,
    pub person_id: String,
}

/// One alert credited to one person.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution<T> {
    pub person: PersonKey,
    pub event_id: u64,
    pub timestamp: T,
    pub frame_index: u64,
    /// False when credit came from the nearest-center fallback.
    pub by_overlap: bool,
}

fn clip_nodes<'a, T: Scalar>(
    run: &'a RunLog<T>,
    clip: &Clip<T>,
) -> Result<Vec<&'a RunNode>, EvalError> {
    let nodes: Vec<&RunNode> = run
        .header
        .nodes
        .iter()
        .filter(|n| n.clip_id == clip.clip_id)
        .collect();
    if nodes.is_empty() {
        return Err(EvalError::ClipMismatch(format!(
            "run has no stream from clip {}",
            clip.clip_id
        )));
    }
    for n in &nodes {
        if !clip.streams.contains_key(&n.source_node) {
            return Err(EvalError::ClipMismatch(format!(
                "run node {} replays unknown clip node {}",
                n.node_id, n.source_node
            )));
        }
    }
    Ok(nodes)
}

fn resolve_node<'a, T: Scalar>(
    run: &'a RunLog<T>,
    clip: &Clip<T>,
    node_id: &str,
    frame_index: u64,
) -> Result<Option<&'a RunNode>, EvalError> {
    let node = run.header.node(node_id).ok_or_else(|| {
        EvalError::ClipMismatch(format!("event names unknown run node {node_id}"))
    })?;
    if node.clip_id != clip.clip_id {
        return Ok(None);
    }
    if frame_index as usize >= clip.frame_count() {
        return Err(EvalError::ClipMismatch(format!(
            "node {node_id} references frame {frame_index}, clip {} has {}",
            clip.clip_id,
            clip.frame_count()
        )));
    }
    Ok(Some(node))
}

/// Frame-wise counts summed over every replayed stream of `clip`.
///
/// The detections scored on a frame are the person-class tracks that became
/// alert candidates on that frame.
pub fn framewise_counts<T: Scalar>(
    run: &RunLog<T>,
    clip: &Clip<T>,
    iou_threshold: T,
) -> Result<Counts, EvalError> {
    if !(iou_threshold > T::zero() && iou_threshold < T::one()) {
        return Err(EvalError::InvalidParams(format!(
            "iou threshold {iou_threshold} outside (0,1)"
        )));
    }
    clip_nodes(run, clip)?;
    let mut seen: BTreeSet<(&str, u64)> = BTreeSet::new();
    let mut total = Counts::default();
    for ev in run.events() {
        let RunEvent::Tracks {
            node_id,
            frame_index,
            tracks,
            candidates,
        } = ev
        else {
            continue;
        };
        let Some(node) = resolve_node(run, clip, node_id, *frame_index)? else {
            continue;
        };
        if !seen.insert((node_id.as_str(), *frame_index)) {
            return Err(EvalError::ClipMismatch(format!(
                "node {node_id} frame {frame_index} scored twice"
            )));
        }
        let detected: Vec<Track<T>> = tracks
            .iter()
            .filter(|t| t.class == DetectionClass::Person && candidates.contains(&t.track_id))
            .cloned()
            .collect();
        let gt: Vec<Rect<T>> = clip
            .persons_at(&node.source_node, *frame_index)
            .filter_map(|p| p.bbox_at(*frame_index).copied())
            .collect();
        total += match_frame(&detected, &gt, iou_threshold);
    }
    Ok(total)
}

/// Micro-averaged `(precision, recall)` over all frames of `clip` in `run`.
pub fn framewise_pr<T: Scalar>(
    run: &RunLog<T>,
    clip: &Clip<T>,
    iou_threshold: T,
) -> Result<(T, T), EvalError> {
    let c = framewise_counts(run, clip, iou_threshold)?;
    Ok((c.precision(), c.recall()))
}

fn center_dist2<T: Scalar>(a: &Rect<T>, b: &Rect<T>) -> T {
    let (p, q) = (a.center(), b.center());
    (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y)
}

/// Credits each alert to the persons its box overlaps on the alert frame, or
/// to the nearest-center person when it overlaps nobody. Alerts on frames
/// with no person present are credited to no one.
pub fn attribute_alerts<T: Scalar>(
    run: &RunLog<T>,
    clip: &Clip<T>,
) -> Result<Vec<Attribution<T>>, EvalError> {
    clip_nodes(run, clip)?;
    let mut out = Vec::new();
    for a in run.alerts() {
        let Some(node) = resolve_node(run, clip, &a.node_id, a.frame_index)? else {
            continue;
        };
        let present: Vec<(&GroundTruthPerson<T>, &Rect<T>)> = clip
            .persons_at(&node.source_node, a.frame_index)
            .filter_map(|p| p.bbox_at(a.frame_index).map(|b| (p, b)))
            .collect();
        let credit = |p: &GroundTruthPerson<T>, by_overlap: bool| Attribution {
            person: PersonKey {
                node_id: node.source_node.clone(),
                person_id: p.person_id.clone(),
            },
            event_id: a.event_id,
            timestamp: a.timestamp,
            frame_index: a.frame_index,
            by_overlap,
        };
        let overlapping: Vec<_> = present
            .iter()
            .filter(|(_, b)| a.bbox.iou(b) > T::zero())
            .collect();
        if !overlapping.is_empty() {
            out.extend(overlapping.iter().map(|(p, _)| credit(p, true)));
        } else if let Some((p, _)) = present.iter().min_by(|(_, x), (_, y)| {
            center_dist2(&a.bbox, x)
                .partial_cmp(&center_dist2(&a.bbox, y))
                .unwrap_or(std::cmp::Ordering::Equal)
        }) {
            out.push(credit(p, false));
        }
    }
    Ok(out)
}

/// Every ground-truth person of `clip` on a node the run replayed.
pub fn person_instances<T: Scalar>(
    run: &RunLog<T>,
    clip: &Clip<T>,
) -> Result<Vec<PersonKey>, EvalError> {
    let nodes = clip_nodes(run, clip)?;
    let mut out: Vec<PersonKey> = clip
        .ground_truth
        .iter()
        .filter(|p| nodes.iter().any(|n| n.source_node == p.node_id))
        .map(|p| PersonKey {
            node_id: p.node_id.clone(),
            person_id: p.person_id.clone(),
        })
        .collect();
    out.sort();
    out.dedup();
    Ok(out)
}

/// First attribution per person.
fn first_alerts<T: Scalar>(
    run: &RunLog<T>,
    clip: &Clip<T>,
) -> Result<BTreeMap<PersonKey, Attribution<T>>, EvalError> {
    let mut first: BTreeMap<PersonKey, Attribution<T>> = BTreeMap::new();
    for at in attribute_alerts(run, clip)? {
        first.entry(at.person.clone()).or_insert(at);
    }
    Ok(first)
}

/// `(alerted, total)` persons.
pub fn alert_counts<T: Scalar>(
    run: &RunLog<T>,
    clip: &Clip<T>,
) -> Result<(usize, usize), EvalError> {
    let persons = person_instances(run, clip)?;
    let first = first_alerts(run, clip)?;
    let alerted = persons.iter().filter(|p| first.contains_key(p)).count();
    Ok((alerted, persons.len()))
}

/// `100 × alerted / total`; 100 when the clip has no persons.
pub fn alert_percent<T: Scalar>(run: &RunLog<T>, clip: &Clip<T>) -> Result<T, EvalError> {
    let (alerted, total) = alert_counts(run, clip)?;
    Ok(percent(alerted, total))
}

pub(crate) fn percent<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::lit(100.0)
    } else {
        T::lit(100.0) * T::lit(num as f64) / T::lit(den as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct PersonDelay<T> {
    pub person: PersonKey,
    pub event_id: u64,
    pub raw: T,
    pub compensated: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub enum EvalWarning<T> {
    /// Compensation produced a delay below zero. The value is kept as is and
    /// counted in the first histogram bin.
    NegativeDelay { person: PersonKey, delay: T },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DelayReport<T> {
    pub delays: Vec<PersonDelay<T>>,
    pub warnings: Vec<EvalWarning<T>>,
}

impl<T: Scalar> DelayReport<T> {
    pub fn compensated(&self) -> Vec<T> {
        self.delays.iter().map(|d| d.compensated).collect()
    }
}

/// Compensated alert delay for every alerted person, in person order.
pub fn alert_delays<T: Scalar>(
    run: &RunLog<T>,
    clip: &Clip<T>,
    acct: &LatencyAccounting<T>,
) -> Result<DelayReport<T>, EvalError> {
    acct.validate()?;
    let first = first_alerts(run, clip)?;
    let mut report = DelayReport {
        delays: Vec::new(),
        warnings: Vec::new(),
    };
    for (key, at) in first {
        let person = clip
            .ground_truth
            .iter()
            .find(|p| p.person_id == key.person_id && p.node_id == key.node_id)
            .expect("attributed person exists in clip");
        let entry = clip
            .frame(&key.node_id, person.entry_frame)
            .ok_or_else(|| {
                EvalError::ClipMismatch(format!(
                    "person {} enters on missing frame {}",
                    person.person_id, person.entry_frame
                ))
            })?
            .timestamp;
        let raw = at.timestamp - entry;
        let mut compensated = acct.compensate(raw, run.header.capture);
        if acct.include_mesh {
            let mesh = run
                .deliveries()
                .filter(|d| d.event_id == at.event_id)
                .map(|d| d.latency())
                .fold(None, |m: Option<T>, l| Some(m.map_or(l, |m| m.min(l))));
            if let Some(l) = mesh {
                compensated = compensated + l;
            }
        }
        if compensated < T::zero() {
            report.warnings.push(EvalWarning::NegativeDelay {
                person: key.clone(),
                delay: compensated,
            });
        }
        report.delays.push(PersonDelay {
            person: key,
            event_id: at.event_id,
            raw,
            compensated,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Histogram<T> {
    pub bin_width: T,
    /// Bin index `k` covers `[k·w, (k+1)·w)`.
    pub bins: BTreeMap<u64, u64>,
}

impl<T: Scalar> Histogram<T> {
    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }
}

/// Half-open histogram of delays. Negative delays land in bin 0.
pub fn delay_histogram<T: Scalar>(delays: &[T], bin_width: T) -> Result<Histogram<T>, EvalError> {
    if !(bin_width > T::zero()) || !bin_width.is_finite() {
        return Err(EvalError::InvalidParams(format!(
            "bin width {bin_width} must be positive"
        )));
    }
    let mut bins = BTreeMap::new();
    for &d in delays {
        let k = (d.max(T::zero()) / bin_width)
            .floor()
            .to_u64()
            .unwrap_or(u64::MAX);
        *bins.entry(k).or_insert(0) += 1;
    }
    Ok(Histogram { bin_width, bins })
}

pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    })
}
