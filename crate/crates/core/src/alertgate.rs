//! Turns confirmed tracks into alerts.
//!
//! A track becomes an alert candidate when it is confirmed, its class is
//! selected, its smoothed confidence reaches the mode threshold and it
//! touches the node's zone (if one is drawn). Candidates then pass a
//! per-device debounce: once a device is alerted it stays silent for the
//! notification window.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clipstore::DetectionClass;
use crate::geom::{GeomError, Point, Polygon, Rect};
use crate::num::Scalar;
use crate::tracker::{Track, TrackState, TrackerParams};

pub const DEFAULT_DEBOUNCE_MS: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{field} = {value} outside {range}")]
    OutOfRange {
        field: &'static str,
        value: String,
        range: &'static str,
    },
    #[error("class mask must not be empty")]
    EmptyClassMask,
    #[error("zone for node {node}: {source}")]
    Zone {
        node: String,
        #[source]
        source: GeomError,
    },
    #[error(transparent)]
    Tracker(#[from] crate::tracker::TrackerError),
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Default,
    Reactive,
    Certain,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Reactive, Mode::Default, Mode::Certain];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Default => "default",
            Mode::Reactive => "reactive",
            Mode::Certain => "certain",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ValidationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(Mode::Default),
            "reactive" => Ok(Mode::Reactive),
            "certain" => Ok(Mode::Certain),
            _ => Err(ValidationError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ModePreset<T> {
    pub alert_confidence_threshold: T,
    pub tracker_params: TrackerParams<T>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetTable {
    reactive: ModePreset<f64>,
    default: ModePreset<f64>,
    certain: ModePreset<f64>,
}

const PRESET_DATA: &str = include_str!("../presets/modes.json");

fn preset_table() -> &'static PresetTable {
    static TABLE: OnceLock<PresetTable> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(PRESET_DATA).expect("bundled mode presets parse"))
}

/// The frozen `(threshold, tracker params)` tuple for a mode.
pub fn mode_preset<T: Scalar>(mode: Mode) -> ModePreset<T> {
    let t = preset_table();
    let p = match mode {
        Mode::Reactive => &t.reactive,
        Mode::Default => &t.default,
        Mode::Certain => &t.certain,
    };
    let tp = &p.tracker_params;
    ModePreset {
        alert_confidence_threshold: T::lit(p.alert_confidence_threshold),
        tracker_params: TrackerParams {
            iou_match_threshold: T::lit(tp.iou_match_threshold),
            confidence_smoothing_alpha: T::lit(tp.confidence_smoothing_alpha),
            confirm_hits: tp.confirm_hits,
            miss_decay: T::lit(tp.miss_decay),
            expire_after_misses: tp.expire_after_misses,
        },
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ZoneSemantics {
    /// Alert only on detections that touch the polygon.
    #[default]
    Include,
}

/// Operator-drawn region of interest for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Zone<T> {
    pub polygon: Polygon<T>,
    #[serde(default)]
    pub semantics: ZoneSemantics,
}

impl<T: Scalar> Zone<T> {
    pub fn new(vertices: Vec<Point<T>>) -> Result<Self, GeomError> {
        Ok(Self {
            polygon: Polygon::new(vertices)?,
            semantics: ZoneSemantics::Include,
        })
    }

    pub fn full_frame() -> Self {
        Self {
            polygon: Polygon::full_frame(),
            semantics: ZoneSemantics::Include,
        }
    }
}

/// Closed-set test: touching counts as intersecting.
pub fn zone_intersects<T: Scalar>(bbox: &Rect<T>, zone: &Zone<T>) -> bool {
    zone.polygon.intersects_rect(bbox)
}

fn default_debounce<T: Scalar>() -> T {
    T::lit(DEFAULT_DEBOUNCE_MS)
}

fn default_mask() -> BTreeSet<DetectionClass> {
    BTreeSet::from([DetectionClass::Person])
}

/// Complete pipeline configuration snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct PipelineConfig<T> {
    pub mode: Mode,
    pub alert_confidence_threshold: T,
    pub tracker_params: TrackerParams<T>,
    pub class_mask: BTreeSet<DetectionClass>,
    /// Keyed by camera node id; a node without an entry has no zone.
    #[serde(default)]
    pub zones: BTreeMap<String, Zone<T>>,
    pub min_quality: T,
    /// Milliseconds.
    #[serde(default = "default_debounce::<T>")]
    pub debounce_window: T,
}

impl<T: Scalar> PipelineConfig<T> {
    pub fn for_mode(mode: Mode) -> Self {
        let p = mode_preset(mode);
        Self {
            mode,
            alert_confidence_threshold: p.alert_confidence_threshold,
            tracker_params: p.tracker_params,
            class_mask: default_mask(),
            zones: BTreeMap::new(),
            min_quality: T::lit(0.5),
            debounce_window: default_debounce(),
        }
    }

    /// Overwrites threshold and tracker parameters with the mode's preset.
    pub fn set_mode(&mut self, mode: Mode) {
        let p = mode_preset(mode);
        self.mode = mode;
        self.alert_confidence_threshold = p.alert_confidence_threshold;
        self.tracker_params = p.tracker_params;
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let unit = |field: &'static str, v: T| {
            if v.in_unit_interval() {
                Ok(())
            } else {
                Err(ValidationError::OutOfRange {
                    field,
                    value: v.to_string(),
                    range: "[0,1]",
                })
            }
        };
        unit(
            "alert_confidence_threshold",
            self.alert_confidence_threshold,
        )?;
        unit("min_quality", self.min_quality)?;
        if !(self.debounce_window > T::zero()) || !self.debounce_window.is_finite() {
            return Err(ValidationError::OutOfRange {
                field: "debounce_window",
                value: self.debounce_window.to_string(),
                range: "(0,inf)",
            });
        }
        self.tracker_params.validate()?;
        if self.class_mask.is_empty() {
            return Err(ValidationError::EmptyClassMask);
        }
        for (node, z) in &self.zones {
            Polygon::new(z.polygon.vertices().to_vec()).map_err(|source| {
                ValidationError::Zone {
                    node: node.clone(),
                    source,
                }
            })?;
        }
        Ok(())
    }
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self::for_mode(Mode::Default)
    }
}

/// Config file form: threshold and tracker parameters may be omitted and are
/// then taken from the mode preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ConfigDocument<T> {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert_confidence_threshold: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracker_params: Option<TrackerParams<T>>,
    #[serde(default = "default_mask")]
    pub class_mask: BTreeSet<DetectionClass>,
    #[serde(default)]
    pub zones: BTreeMap<String, Zone<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_quality: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debounce_window: Option<T>,
}

fn default_mode() -> Mode {
    Mode::Default
}

impl<T: Scalar> ConfigDocument<T> {
    pub fn resolve(self) -> Result<PipelineConfig<T>, ValidationError> {
        let mut cfg = PipelineConfig::for_mode(self.mode);
        if let Some(t) = self.alert_confidence_threshold {
            cfg.alert_confidence_threshold = t;
        }
        if let Some(tp) = self.tracker_params {
            cfg.tracker_params = tp;
        }
        cfg.class_mask = self.class_mask;
        cfg.zones = self.zones;
        if let Some(q) = self.min_quality {
            cfg.min_quality = q;
        }
        if let Some(w) = self.debounce_window {
            cfg.debounce_window = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A track that passed every filter on this frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct AlertCandidate<T> {
    pub timestamp: T,
    pub node_id: String,
    pub frame_index: u64,
    pub track_id: u64,
    pub class: DetectionClass,
    pub confidence: T,
    pub bbox: Rect<T>,
}

/// Applies the confirmation, class, threshold and zone filters. Only tracks
/// matched on this frame qualify; coasting tracks never alert. `zone_node`
/// names the camera whose zone applies; output is ordered by track id.
pub fn evaluate_frame<T: Scalar>(
    live_tracks: &[Track<T>],
    config: &PipelineConfig<T>,
    zone_node: &str,
    frame_index: u64,
    now: T,
) -> Vec<AlertCandidate<T>> {
    let zone = config.zones.get(zone_node);
    let mut out: Vec<_> = live_tracks
        .iter()
        .filter(|t| t.state == TrackState::Confirmed && t.misses == 0)
        .filter(|t| config.class_mask.contains(&t.class))
        .filter(|t| t.smoothed_confidence >= config.alert_confidence_threshold)
        .filter(|t| zone.is_none_or(|z| zone_intersects(&t.last_bbox, z)))
        .map(|t| AlertCandidate {
            timestamp: now,
            node_id: t.node_id.clone(),
            frame_index,
            track_id: t.track_id,
            class: t.class,
            confidence: t.smoothed_confidence,
            bbox: t.last_bbox,
        })
        .collect();
    out.sort_by_key(|c| c.track_id);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct AlertEvent<T> {
    pub event_id: u64,
    pub timestamp: T,
    pub node_id: String,
    pub frame_index: u64,
    pub track_id: u64,
    pub class: DetectionClass,
    pub confidence_at_alert: T,
    pub bbox: Rect<T>,
}

/// Last delivery time per device (authoritative) and per device/track
/// (diagnostic only).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlertLedger<T> {
    per_device: BTreeMap<String, T>,
    per_device_track: BTreeMap<(String, String, u64), T>,
}

impl<T: Scalar> AlertLedger<T> {
    pub fn new() -> Self {
        Self {
            per_device: BTreeMap::new(),
            per_device_track: BTreeMap::new(),
        }
    }

    pub fn last_alert(&self, device_id: &str) -> Option<T> {
        self.per_device.get(device_id).copied()
    }

    pub fn last_alert_for_track(&self, device_id: &str, node_id: &str, track_id: u64) -> Option<T> {
        self.per_device_track
            .get(&(device_id.to_string(), node_id.to_string(), track_id))
            .copied()
    }
}

/// Decides which devices receive `candidate`. A device is alerted iff it
/// has never been alerted or `now - last >= window`. Accepted deliveries
/// update the ledger; if no device accepts, the ledger is untouched and the
/// result is empty. The event carries `event_id` when delivered.
pub fn debounce<T: Scalar>(
    candidate: &AlertCandidate<T>,
    ledger: &mut AlertLedger<T>,
    targets: &[String],
    now: T,
    window: T,
    event_id: u64,
) -> Vec<(String, AlertEvent<T>)> {
    let accepted: Vec<&String> = targets
        .iter()
        .filter(|d| ledger.last_alert(d).is_none_or(|last| now - last >= window))
        .collect();
    if accepted.is_empty() {
        return Vec::new();
    }
    let event = AlertEvent {
        event_id,
        timestamp: now,
        node_id: candidate.node_id.clone(),
        frame_index: candidate.frame_index,
        track_id: candidate.track_id,
        class: candidate.class,
        confidence_at_alert: candidate.confidence,
        bbox: candidate.bbox,
    };
    accepted
        .into_iter()
        .map(|d| {
            ledger.per_device.insert(d.clone(), now);
            ledger.per_device_track.insert(
                (d.clone(), candidate.node_id.clone(), candidate.track_id),
                now,
            );
            (d.clone(), event.clone())
        })
        .collect()
}
