//! Replayable record of a pipeline run.
//!
//! On disk a run log is line-delimited JSON: one `header` line, one `entry`
//! line per event in run-clock order, and a closing `footer` line. Serialized
//! output is a pure function of the run, so two identical simulated runs
//! produce byte-identical files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alertgate::{AlertEvent, PipelineConfig};
use crate::alertnet::{DeliveryRecord, MeshTopology};
use crate::clipstore::{FrameRecord, QualityVerdict};
use crate::num::Scalar;
use crate::tracker::Track;

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// As fast as possible; fully deterministic.
    #[default]
    Simulated,
    /// Paced to the clip frame clock.
    Realtime,
}

/// How the alert timestamps were captured. Harness-loop runs include the
/// host↔device network round trip, which delay compensation removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    #[default]
    Internal,
    HarnessLoop,
}

/// A replayed stream: one source node of one clip under one replica index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunNode {
    pub node_id: String,
    pub clip_id: String,
    pub source_node: String,
    pub replica: u32,
}

impl RunNode {
    pub fn new(clip_id: &str, source_node: &str, replica: u32) -> Self {
        Self {
            node_id: format!("{clip_id}/{source_node}/{replica}"),
            clip_id: clip_id.to_string(),
            source_node: source_node.to_string(),
            replica,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ClipInfo<T> {
    pub clip_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub frame_rate: T,
    pub duration: T,
    pub frame_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct RunHeader<T> {
    pub seed: u64,
    pub clock_mode: ClockMode,
    pub capture: CaptureMode,
    pub duplication: u32,
    pub clips: Vec<ClipInfo<T>>,
    pub nodes: Vec<RunNode>,
    pub config_version: u64,
    pub config: PipelineConfig<T>,
    pub topology: MeshTopology,
}

impl<T> RunHeader<T> {
    pub fn node(&self, node_id: &str) -> Option<&RunNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Frame,
    Advisory,
    Tracks,
    Alert,
    Delivery,
    Config,
    Run,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub enum RunEvent<T> {
    /// A frame consumed by the pipeline, with the config version it ran under.
    Frame {
        config_version: u64,
        quality: QualityVerdict,
        record: FrameRecord<T>,
    },
    /// Quality gate failure surfaced to the operator.
    Advisory {
        node_id: String,
        frame_index: u64,
        message: String,
    },
    /// Live tracks after the update, plus the ids that became candidates.
    Tracks {
        node_id: String,
        frame_index: u64,
        tracks: Vec<Track<T>>,
        candidates: Vec<u64>,
    },
    Alert(AlertEvent<T>),
    Delivery(DeliveryRecord<T>),
    DeliveryFailed {
        event_id: u64,
        device_id: String,
        reason: String,
    },
    ConfigChanged {
        version: u64,
        config: PipelineConfig<T>,
    },
}

impl<T> RunEvent<T> {
    pub fn kind(&self) -> EventKind {
        match self {
            RunEvent::Frame { .. } => EventKind::Frame,
            RunEvent::Advisory { .. } => EventKind::Advisory,
            RunEvent::Tracks { .. } => EventKind::Tracks,
            RunEvent::Alert(_) => EventKind::Alert,
            RunEvent::Delivery(_) | RunEvent::DeliveryFailed { .. } => EventKind::Delivery,
            RunEvent::ConfigChanged { .. } => EventKind::Config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct LogEntry<T> {
    pub seq: u64,
    pub timestamp: T,
    pub event: RunEvent<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct RunFooter<T> {
    pub status: RunStatus,
    pub frames_processed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_timestamp: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog<T> {
    pub header: RunHeader<T>,
    pub entries: Vec<LogEntry<T>>,
    pub footer: RunFooter<T>,
}

/// One line of a run log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub enum Line<T> {
    Header(RunHeader<T>),
    Entry(LogEntry<T>),
    Footer(RunFooter<T>),
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
enum LineRef<'a, T> {
    Header(&'a RunHeader<T>),
    Entry(&'a LogEntry<T>),
    Footer(&'a RunFooter<T>),
}

impl<T: Scalar> RunLog<T> {
    pub fn events(&self) -> impl Iterator<Item = &RunEvent<T>> {
        self.entries.iter().map(|e| &e.event)
    }

    pub fn alerts(&self) -> impl Iterator<Item = &AlertEvent<T>> {
        self.events().filter_map(|e| match e {
            RunEvent::Alert(a) => Some(a),
            _ => None,
        })
    }

    pub fn deliveries(&self) -> impl Iterator<Item = &DeliveryRecord<T>> {
        self.events().filter_map(|e| match e {
            RunEvent::Delivery(d) => Some(d),
            _ => None,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = |v: &LineRef<'_, T>| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, v)?;
            w.write_all(b"\n")
        };
        line(&LineRef::Header(&self.header))?;
        for e in &self.entries {
            line(&LineRef::Entry(e))?;
        }
        line(&LineRef::Footer(&self.footer))?;
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    /// Serialized entries and footer only, for comparing the behaviour of
    /// two runs whose configs differ.
    pub fn event_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut buf, &LineRef::Entry(e)).expect("writing to memory");
            buf.push(b'\n');
        }
        serde_json::to_writer(&mut buf, &LineRef::<T>::Footer(&self.footer))
            .expect("writing to memory");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RunLogError> {
        let f = fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, RunLogError> {
        let mut header = None;
        let mut footer = None;
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let perr = |msg: String| RunLogError::Parse { line: i + 1, msg };
            if footer.is_some() {
                return Err(perr("content after footer".into()));
            }
            match serde_json::from_str::<Line<T>>(&line).map_err(|e| perr(e.to_string()))? {
                Line::Header(h) if header.is_none() && entries.is_empty() => header = Some(h),
                Line::Header(_) => return Err(perr("unexpected header".into())),
                Line::Entry(_) if header.is_none() => {
                    return Err(perr("entry before header".into()))
                }
                Line::Entry(e) => entries.push(e),
                Line::Footer(f) => footer = Some(f),
            }
        }
        let header = header.ok_or(RunLogError::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        let footer = footer.ok_or(RunLogError::Parse {
            line: 0,
            msg: "missing footer (truncated log)".into(),
        })?;
        Ok(Self {
            header,
            entries,
            footer,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunLogError> {
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }
}
