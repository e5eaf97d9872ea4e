//! Frame-to-frame association of detections into persistent tracks.
//!
//! Matching is greedy by descending IoU against each track's last box, gated
//! by class. Confidence is an exponential moving average on hits and decays
//! geometrically on misses. There is no motion model.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clipstore::{Detection, DetectionClass, FrameRecord};
use crate::geom::Rect;
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackerError {
    #[error("node {node_id}: frame {frame_index} is not after last processed frame {last}")]
    OutOfOrderFrame {
        node_id: String,
        frame_index: u64,
        last: u64,
    },
    #[error("invalid tracker parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Track<T> {
    pub track_id: u64,
    pub node_id: String,
    pub class: DetectionClass,
    pub smoothed_confidence: T,
    pub last_bbox: Rect<T>,
    pub last_seen_frame: u64,
    pub hit_count: u32,
    /// Consecutive frames without a matching detection.
    pub misses: u32,
    pub state: TrackState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct TrackerParams<T> {
    pub iou_match_threshold: T,
    pub confidence_smoothing_alpha: T,
    pub confirm_hits: u32,
    pub miss_decay: T,
    pub expire_after_misses: u32,
}

impl<T: Scalar> TrackerParams<T> {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let (z, o) = (T::zero(), T::one());
        let bad = |m: String| Err(TrackerError::InvalidParams(m));
        if !(self.iou_match_threshold > z && self.iou_match_threshold < o) {
            return bad(format!(
                "iou_match_threshold {} not in (0,1)",
                self.iou_match_threshold
            ));
        }
        if !(self.confidence_smoothing_alpha > z && self.confidence_smoothing_alpha <= o) {
            return bad(format!(
                "confidence_smoothing_alpha {} not in (0,1]",
                self.confidence_smoothing_alpha
            ));
        }
        if !(self.miss_decay > z && self.miss_decay <= o) {
            return bad(format!("miss_decay {} not in (0,1]", self.miss_decay));
        }
        if self.confirm_hits < 1 {
            return bad("confirm_hits must be >= 1".into());
        }
        if self.expire_after_misses < 1 {
            return bad("expire_after_misses must be >= 1".into());
        }
        Ok(())
    }
}

/// Result of [`associate`]: matched `(track index, detection index)` pairs in
/// the order they were chosen, plus leftovers in ascending index order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Greedy one-to-one assignment over a score matrix.
///
/// Candidate pairs with `score >= threshold` and `allowed(row, col)` are
/// taken in descending score order; ties go to the lower row key, then the
/// lower column index.
pub(crate) fn greedy_assign<T: Scalar>(
    scores: &[Vec<T>],
    cols: usize,
    threshold: T,
    row_key: impl Fn(usize) -> u64,
    allowed: impl Fn(usize, usize) -> bool,
) -> Assignment {
    let rows = scores.len();
    let mut pairs: Vec<(T, u64, usize, usize)> = Vec::new();
    for (r, row) in scores.iter().enumerate() {
        for (c, &s) in row.iter().enumerate().take(cols) {
            if s >= threshold && allowed(r, c) {
                pairs.push((s, row_key(r), r, c));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.3.cmp(&b.3))
    });
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut matches = Vec::new();
    for (_, _, r, c) in pairs {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            matches.push((r, c));
        }
    }
    Assignment {
        matches,
        unmatched_tracks: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_detections: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Matches tracks to same-class detections by greedy IoU.
pub fn associate<T: Scalar>(
    tracks: &[Track<T>],
    detections: &[Detection<T>],
    params: &TrackerParams<T>,
) -> Assignment {
    let scores: Vec<Vec<T>> = tracks
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| t.last_bbox.iou(&d.bbox))
                .collect()
        })
        .collect();
    greedy_assign(
        &scores,
        detections.len(),
        params.iou_match_threshold,
        |r| tracks[r].track_id,
        |r, c| tracks[r].class == detections[c].class,
    )
}

/// Per-node tracker: live tracks plus the node's id counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeTracker<T> {
    tracks: Vec<Track<T>>,
    next_track_id: u64,
    last_frame: Option<u64>,
}

impl<T: Scalar> NodeTracker<T> {
    pub fn new() -> Self {
        Self {
            tracks: Vec::new(),
            next_track_id: 0,
            last_frame: None,
        }
    }

    pub fn live_tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    /// Advances by one frame and returns the live tracks after the update,
    /// ordered by `track_id`.
    pub fn update(
        &mut self,
        frame: &FrameRecord<T>,
        params: &TrackerParams<T>,
    ) -> Result<Vec<Track<T>>, TrackerError> {
        if let Some(last) = self.last_frame {
            if frame.frame_index <= last {
                return Err(TrackerError::OutOfOrderFrame {
                    node_id: frame.node_id.clone(),
                    frame_index: frame.frame_index,
                    last,
                });
            }
        }
        self.last_frame = Some(frame.frame_index);

        let assignment = associate(&self.tracks, &frame.detections, params);
        let alpha = params.confidence_smoothing_alpha;
        let one = T::one();

        for &(ti, di) in &assignment.matches {
            let det = &frame.detections[di];
            let t = &mut self.tracks[ti];
            t.smoothed_confidence = (alpha * det.confidence
                + (one - alpha) * t.smoothed_confidence)
                .clamp_to(T::zero(), one);
            t.last_bbox = det.bbox;
            t.last_seen_frame = frame.frame_index;
            t.hit_count += 1;
            t.misses = 0;
            if t.state == TrackState::Tentative && t.hit_count >= params.confirm_hits {
                t.state = TrackState::Confirmed;
            }
        }
        for &ti in &assignment.unmatched_tracks {
            let t = &mut self.tracks[ti];
            t.smoothed_confidence =
                (params.miss_decay * t.smoothed_confidence).clamp_to(T::zero(), one);
            t.misses += 1;
            if t.misses >= params.expire_after_misses {
                t.state = TrackState::Expired;
            }
        }
        self.tracks.retain(|t| t.state != TrackState::Expired);

        for &di in &assignment.unmatched_detections {
            let det = &frame.detections[di];
            let state = if params.confirm_hits <= 1 {
                TrackState::Confirmed
            } else {
                TrackState::Tentative
            };
            self.tracks.push(Track {
                track_id: self.next_track_id,
                node_id: frame.node_id.clone(),
                class: det.class,
                smoothed_confidence: det.confidence,
                last_bbox: det.bbox,
                last_seen_frame: frame.frame_index,
                hit_count: 1,
                misses: 0,
                state,
            });
            self.next_track_id += 1;
        }
        Ok(self.tracks.clone())
    }
}

/// Tracker state for every node; nodes are fully independent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackerState<T> {
    nodes: BTreeMap<String, NodeTracker<T>>,
}

impl<T: Scalar> TrackerState<T> {
    pub fn new() -> Self {
        Self {
            nodes: BTreeMap::new(),
        }
    }

    pub fn update_tracks(
        &mut self,
        frame: &FrameRecord<T>,
        params: &TrackerParams<T>,
    ) -> Result<Vec<Track<T>>, TrackerError> {
        self.nodes
            .entry(frame.node_id.clone())
            .or_default()
            .update(frame, params)
    }

    pub fn node(&self, node_id: &str) -> Option<&NodeTracker<T>> {
        self.nodes.get(node_id)
    }
}
