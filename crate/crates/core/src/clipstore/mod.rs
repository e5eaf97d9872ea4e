//! Clip and ground-truth data model, on-disk bundles, seeded synthesis and
//! the frame quality gate.
//!
//! A clip stands in for recorded camera footage: each sensing node contributes
//! a stream of [`FrameRecord`]s holding the detector output for that frame plus
//! a scalar image-quality score.

mod bundle;
pub mod corpus;
mod quality;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Rect;
use crate::num::Scalar;

pub use bundle::{load_clip, save_clip, ClipHeader};
pub use quality::{quality_gate, QualityVerdict};
pub use synth::{synth_clip, NoiseParams, PersonScript, QualityParams, ScenarioSpec};

#[derive(Debug, Error)]
pub enum ClipError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema violation in {}{}: {msg}", file.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    SchemaViolation {
        file: PathBuf,
        line: Option<usize>,
        msg: String,
    },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum DetectionClass {
    Person,
    LightVehicle,
    HeavyVehicle,
    Demarcation,
}

impl DetectionClass {
    pub const ALL: [DetectionClass; 4] = [
        DetectionClass::Person,
        DetectionClass::LightVehicle,
        DetectionClass::HeavyVehicle,
        DetectionClass::Demarcation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Person => "person",
            Self::LightVehicle => "light_vehicle",
            Self::HeavyVehicle => "heavy_vehicle",
            Self::Demarcation => "demarcation",
        }
    }
}

impl fmt::Display for DetectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One detector output box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Detection<T> {
    pub class: DetectionClass,
    pub bbox: Rect<T>,
    pub confidence: T,
}

impl<T: Scalar> Detection<T> {
    pub fn validate(&self) -> Result<(), String> {
        self.bbox.validate().map_err(|e| e.to_string())?;
        if !self.confidence.in_unit_interval() {
            return Err(format!("confidence {} outside [0,1]", self.confidence));
        }
        Ok(())
    }
}

/// One timestamped frame from one sensing node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct FrameRecord<T> {
    pub node_id: String,
    pub frame_index: u64,
    /// Milliseconds since clip start.
    pub timestamp: T,
    pub quality: T,
    pub detections: Vec<Detection<T>>,
}

impl<T: Scalar> FrameRecord<T> {
    pub fn validate(&self) -> Result<(), String> {
        if !self.quality.in_unit_interval() {
            return Err(format!("quality {} outside [0,1]", self.quality));
        }
        if !(self.timestamp >= T::zero()) {
            return Err(format!("negative timestamp {}", self.timestamp));
        }
        for (i, d) in self.detections.iter().enumerate() {
            d.validate().map_err(|e| format!("detection {i}: {e}"))?;
        }
        Ok(())
    }
}

/// Ground-truth track of one person on one node.
///
/// `bboxes[k]` is the box on frame `entry_frame + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct GroundTruthPerson<T> {
    pub person_id: String,
    pub node_id: String,
    pub entry_frame: u64,
    pub exit_frame: u64,
    pub bboxes: Vec<Rect<T>>,
}

impl<T: Scalar> GroundTruthPerson<T> {
    pub fn bbox_at(&self, frame_index: u64) -> Option<&Rect<T>> {
        if frame_index < self.entry_frame || frame_index > self.exit_frame {
            return None;
        }
        self.bboxes.get((frame_index - self.entry_frame) as usize)
    }

    pub fn in_frame(&self, frame_index: u64) -> bool {
        (self.entry_frame..=self.exit_frame).contains(&frame_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip<T> {
    pub clip_id: String,
    /// Optional grouping label used by reports.
    pub dataset: Option<String>,
    pub frame_rate: T,
    /// Seconds.
    pub duration: T,
    pub streams: BTreeMap<String, Vec<FrameRecord<T>>>,
    pub ground_truth: Vec<GroundTruthPerson<T>>,
}

impl<T: Scalar> Clip<T> {
    pub fn frame_count(&self) -> usize {
        self.streams.values().next().map_or(0, Vec::len)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }

    pub fn frame(&self, node_id: &str, frame_index: u64) -> Option<&FrameRecord<T>> {
        self.streams
            .get(node_id)
            .and_then(|s| s.get(frame_index as usize))
    }

    /// Persons visible on `node_id` at `frame_index`.
    pub fn persons_at<'a>(
        &'a self,
        node_id: &'a str,
        frame_index: u64,
    ) -> impl Iterator<Item = &'a GroundTruthPerson<T>> + 'a {
        self.ground_truth
            .iter()
            .filter(move |p| p.node_id == node_id && p.in_frame(frame_index))
    }

    /// Checks every structural invariant of the clip and its records.
    pub fn validate(&self) -> Result<(), ClipError> {
        let inv = |m: String| Err(ClipError::InvariantViolation(m));
        if !(self.frame_rate > T::zero()) {
            return inv(format!("frame rate {} must be positive", self.frame_rate));
        }
        if self.streams.is_empty() {
            return inv("clip has no node streams".into());
        }
        let count = self.frame_count();
        for (node, frames) in &self.streams {
            if frames.len() != count {
                return inv(format!(
                    "node {node} has {} frames, expected {count}",
                    frames.len()
                ));
            }
            let mut prev_ts: Option<T> = None;
            for (i, f) in frames.iter().enumerate() {
                if &f.node_id != node {
                    return inv(format!(
                        "frame {} in stream {node} names node {}",
                        f.frame_index, f.node_id
                    ));
                }
                if f.frame_index != i as u64 {
                    return inv(format!(
                        "node {node}: expected frame_index {i}, found {} (gap or reordering)",
                        f.frame_index
                    ));
                }
                if let Some(p) = prev_ts {
                    if !(f.timestamp > p) {
                        return inv(format!(
                            "node {node}: timestamp {} at frame {i} does not increase",
                            f.timestamp
                        ));
                    }
                }
                prev_ts = Some(f.timestamp);
                f.validate().map_err(|e| {
                    ClipError::InvariantViolation(format!("node {node} frame {i}: {e}"))
                })?;
            }
        }
        // duration ≈ frame_count / frame_rate, within one frame period
        let expected = T::from_usize(count).unwrap_or_else(T::zero) / self.frame_rate;
        if (expected - self.duration).abs() > T::one() / self.frame_rate {
            return inv(format!(
                "duration {} s disagrees with {count} frames at {} fps",
                self.duration, self.frame_rate
            ));
        }
        for p in &self.ground_truth {
            if !self.streams.contains_key(&p.node_id) {
                return inv(format!(
                    "person {} on unknown node {}",
                    p.person_id, p.node_id
                ));
            }
            if p.entry_frame > p.exit_frame {
                return inv(format!("person {}: entry after exit", p.person_id));
            }
            if p.exit_frame as usize >= count {
                return inv(format!("person {}: exit beyond last frame", p.person_id));
            }
            let span = (p.exit_frame - p.entry_frame + 1) as usize;
            if p.bboxes.len() != span {
                return inv(format!(
                    "person {}: {} boxes for {span} frames",
                    p.person_id,
                    p.bboxes.len()
                ));
            }
            for b in &p.bboxes {
                b.validate().map_err(|e| {
                    ClipError::InvariantViolation(format!("person {}: {e}", p.person_id))
                })?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(node: &str, i: u64, ts: f64) -> FrameRecord<f64> {
        FrameRecord {
            node_id: node.into(),
            frame_index: i,
            timestamp: ts,
            quality: 1.0,
            detections: vec![],
        }
    }

    fn clip(frames: Vec<FrameRecord<f64>>) -> Clip<f64> {
        let n = frames.len();
        Clip {
            clip_id: "c".into(),
            dataset: None,
            frame_rate: 5.0,
            duration: n as f64 / 5.0,
            streams: BTreeMap::from([("cam1".to_string(), frames)]),
            ground_truth: vec![],
        }
    }

    #[test]
    fn gap_is_invariant_violation() {
        let mut frames: Vec<_> = (0..10)
            .map(|i| frame("cam1", i, i as f64 * 200.0))
            .collect();
        frames.remove(5);
        let mut c = clip(frames);
        c.duration = 2.0;
        assert!(matches!(
            c.validate(),
            Err(ClipError::InvariantViolation(_))
        ));
    }

    #[test]
    fn non_monotone_timestamp_rejected() {
        let mut frames: Vec<_> = (0..10)
            .map(|i| frame("cam1", i, i as f64 * 200.0))
            .collect();
        frames[4].timestamp = 600.0;
        assert!(clip(frames).validate().is_err());
    }

    #[test]
    fn gt_box_count_checked() {
        let frames: Vec<_> = (0..10)
            .map(|i| frame("cam1", i, i as f64 * 200.0))
            .collect();
        let mut c = clip(frames);
        c.ground_truth.push(GroundTruthPerson {
            person_id: "p".into(),
            node_id: "cam1".into(),
            entry_frame: 2,
            exit_frame: 4,
            bboxes: vec![Rect::new(0.1, 0.1, 0.2, 0.2).unwrap(); 2],
        });
        assert!(c.validate().is_err());
        c.ground_truth[0]
            .bboxes
            .push(Rect::new(0.1, 0.1, 0.2, 0.2).unwrap());
        c.validate().unwrap();
        assert!(c.ground_truth[0].bbox_at(4).is_some());
        assert!(c.ground_truth[0].bbox_at(5).is_none());
    }

    #[test]
    fn class_names_are_snake_case() {
        let s = serde_json::to_string(&DetectionClass::HeavyVehicle).unwrap();
        assert_eq!(s, "\"heavy_vehicle\"");
        assert!(serde_json::from_str::<DetectionClass>("\"bicycle\"").is_err());
    }
}
