use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::bus::{EventBus, Lifecycle, StreamBody};
use super::config::{ConfigSnapshot, ConfigStore};
use super::ControlError;
use crate::alertgate::{debounce, evaluate_frame, AlertLedger, PipelineConfig, Zone};
use crate::alertnet::{dispatch, MeshTopology};
use crate::clipstore::{load_clip, quality_gate, Clip, FrameRecord};
use crate::num::Scalar;
use crate::runlog::{
    CaptureMode, ClipInfo, ClockMode, LogEntry, RunEvent, RunFooter, RunHeader, RunLog, RunNode,
    RunStatus,
};
use crate::tracker::{Track, TrackerState};

pub const DEFAULT_DUPLICATION: u32 = 2;

#[derive(Debug, Clone)]
pub enum ClipSource<T> {
    Path(PathBuf),
    Loaded(Arc<Clip<T>>),
}

impl<T> From<Clip<T>> for ClipSource<T> {
    fn from(c: Clip<T>) -> Self {
        ClipSource::Loaded(Arc::new(c))
    }
}

impl<T> From<PathBuf> for ClipSource<T> {
    fn from(p: PathBuf) -> Self {
        ClipSource::Path(p)
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec<T> {
    pub clips: Vec<ClipSource<T>>,
    pub config: PipelineConfig<T>,
    pub topology: MeshTopology,
    pub clock_mode: ClockMode,
    /// Each source stream is replayed under this many node ids.
    pub duplication: u32,
    pub seed: u64,
    pub capture: CaptureMode,
}

impl<T: Scalar> RunSpec<T> {
    pub fn new(
        clips: Vec<ClipSource<T>>,
        config: PipelineConfig<T>,
        topology: MeshTopology,
    ) -> Self {
        Self {
            clips,
            config,
            topology,
            clock_mode: ClockMode::Simulated,
            duplication: DEFAULT_DUPLICATION,
            seed: 0,
            capture: CaptureMode::Internal,
        }
    }

    /// Checks everything that can be checked without loading clips.
    pub fn check(&self) -> Result<(), ControlError> {
        if self.duplication < 1 {
            return Err(ControlError::InvalidSpec("duplication must be >= 1".into()));
        }
        if self.clips.is_empty() {
            return Err(ControlError::InvalidSpec("no clips".into()));
        }
        if self.topology.device_ids().is_empty() {
            return Err(ControlError::TopologyUnreachable(
                "topology has no devices".into(),
            ));
        }
        self.config.validate()?;
        Ok(())
    }
}

/// Latest frame seen on a run node, for operator field-of-view checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct FramePreview<T> {
    pub node_id: String,
    pub source_node: String,
    pub config_version: u64,
    pub record: FrameRecord<T>,
    pub tracks: Vec<Track<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<Zone<T>>,
}

pub type PreviewStore<T> = Mutex<BTreeMap<String, FramePreview<T>>>;

/// Wall-clock pacing of a realtime run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
pub struct RunStats {
    pub frames: u64,
    /// Mean lateness of frame processing behind its scheduled wall time, ms.
    pub mean_pacing_error_ms: f64,
    pub max_pacing_error_ms: f64,
    /// Frames that began before their scheduled time; always 0.
    pub early_frames: u64,
}

#[derive(Debug)]
pub struct RunOutcome<T> {
    pub log: RunLog<T>,
    pub stats: RunStats,
}

/// Shared state a run reads from and reports to.
pub struct RunContext<T> {
    pub run_id: u64,
    pub config: Arc<ConfigStore<T>>,
    pub bus: Option<Arc<EventBus<T>>>,
    pub stop: Arc<AtomicBool>,
    pub previews: Option<Arc<PreviewStore<T>>>,
}

impl<T: Scalar> RunContext<T> {
    pub fn standalone(config: PipelineConfig<T>) -> Result<Self, ControlError> {
        Ok(Self {
            run_id: 1,
            config: Arc::new(ConfigStore::new(config)?),
            bus: None,
            stop: Arc::new(AtomicBool::new(false)),
            previews: None,
        })
    }
}

pub(crate) fn load_clips<T: Scalar>(spec: &RunSpec<T>) -> Result<Vec<Arc<Clip<T>>>, ControlError> {
    let mut clips = Vec::with_capacity(spec.clips.len());
    for src in &spec.clips {
        let clip = match src {
            ClipSource::Path(p) => {
                Arc::new(load_clip(p).map_err(|source| ControlError::ClipLoad {
                    clip: p.display().to_string(),
                    source,
                })?)
            }
            ClipSource::Loaded(c) => {
                c.validate().map_err(|source| ControlError::ClipLoad {
                    clip: c.clip_id.clone(),
                    source,
                })?;
                c.clone()
            }
        };
        if clips
            .iter()
            .any(|c: &Arc<Clip<T>>| c.clip_id == clip.clip_id)
        {
            return Err(ControlError::InvalidSpec(format!(
                "clip {} listed twice",
                clip.clip_id
            )));
        }
        clips.push(clip);
    }
    Ok(clips)
}

/// Run nodes in clip, source node, replica order, each with its clip index.
pub(crate) fn plan_nodes<T: Scalar>(
    clips: &[Arc<Clip<T>>],
    duplication: u32,
) -> Vec<(RunNode, usize)> {
    let mut nodes = Vec::new();
    for (ci, clip) in clips.iter().enumerate() {
        for source in clip.node_ids() {
            for r in 0..duplication {
                nodes.push((RunNode::new(&clip.clip_id, source, r), ci));
            }
        }
    }
    nodes
}

struct Writer<'a, T> {
    entries: Vec<LogEntry<T>>,
    bus: Option<&'a EventBus<T>>,
}

impl<T: Scalar> Writer<'_, T> {
    fn push(&mut self, timestamp: T, event: RunEvent<T>) {
        let entry = LogEntry {
            seq: self.entries.len() as u64,
            timestamp,
            event,
        };
        if let Some(bus) = self.bus {
            bus.publish(StreamBody::Entry(entry.clone()));
        }
        self.entries.push(entry);
    }
}

/// Replays `spec` to completion (or until `ctx.stop` is raised) and returns
/// the run log.
///
/// Frames from every run node are merged in `(timestamp, node_id)` order and
/// each goes through quality gate, tracker, alert gate, debounce and
/// dispatch before the next one starts. The live config is sampled once per
/// frame, so a change lands on the next frame boundary.
pub fn execute<T: Scalar>(
    spec: &RunSpec<T>,
    ctx: &RunContext<T>,
) -> Result<RunOutcome<T>, ControlError> {
    spec.check()?;
    let targets = spec.topology.device_ids();
    let clips = load_clips(spec)?;

    let nodes = plan_nodes(&clips, spec.duplication);
    let mut schedule: Vec<(T, usize, usize)> = Vec::new();
    for (ni, (node, ci)) in nodes.iter().enumerate() {
        for (fi, f) in clips[*ci].streams[&node.source_node].iter().enumerate() {
            schedule.push((f.timestamp, ni, fi));
        }
    }
    schedule.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| nodes[a.1].0.node_id.cmp(&nodes[b.1].0.node_id))
            .then(a.2.cmp(&b.2))
    });

    let mut snap: Arc<ConfigSnapshot<T>> = ctx.config.snapshot();
    let header = RunHeader {
        seed: spec.seed,
        clock_mode: spec.clock_mode,
        capture: spec.capture,
        duplication: spec.duplication,
        clips: clips
            .iter()
            .map(|c| ClipInfo {
                clip_id: c.clip_id.clone(),
                dataset: c.dataset.clone(),
                frame_rate: c.frame_rate,
                duration: c.duration,
                frame_count: c.frame_count() as u64,
            })
            .collect(),
        nodes: nodes.iter().map(|(n, _)| n.clone()).collect(),
        config_version: snap.version,
        config: snap.config.clone(),
        topology: spec.topology.clone(),
    };
    if let Some(bus) = &ctx.bus {
        bus.publish(StreamBody::Lifecycle(Lifecycle::RunStarted {
            run_id: ctx.run_id,
            config_version: snap.version,
            nodes: header.nodes.clone(),
        }));
    }

    let mut w = Writer {
        entries: Vec::new(),
        bus: ctx.bus.as_deref(),
    };
    let mut tracker = TrackerState::new();
    let mut ledger = AlertLedger::new();
    let mut next_event_id: u64 = 1;
    let mut frames_processed = 0u64;
    let mut last_timestamp = None;
    let mut status = RunStatus::Completed;
    let mut stats = RunStats::default();
    let mut pacing_sum = 0.0;
    let start = Instant::now();

    for &(ts, ni, fi) in &schedule {
        if ctx.stop.load(Ordering::SeqCst) {
            status = RunStatus::Aborted;
            break;
        }
        if spec.clock_mode == ClockMode::Realtime {
            let due = start + Duration::from_secs_f64(ts.to_f64_lossy().max(0.0) / 1000.0);
            loop {
                let now = Instant::now();
                if now >= due {
                    break;
                }
                std::thread::sleep((due - now).min(Duration::from_millis(20)));
                if ctx.stop.load(Ordering::SeqCst) {
                    break;
                }
            }
            if ctx.stop.load(Ordering::SeqCst) {
                status = RunStatus::Aborted;
                break;
            }
            let now = Instant::now();
            if now < due {
                stats.early_frames += 1;
            }
            let err = now.saturating_duration_since(due).as_secs_f64() * 1000.0;
            pacing_sum += err;
            stats.max_pacing_error_ms = stats.max_pacing_error_ms.max(err);
        }

        let latest = ctx.config.snapshot();
        if latest.version != snap.version {
            snap = latest;
            w.push(
                ts,
                RunEvent::ConfigChanged {
                    version: snap.version,
                    config: snap.config.clone(),
                },
            );
        }
        let cfg = &snap.config;

        let (node, ci) = &nodes[ni];
        let mut record = clips[*ci].streams[&node.source_node][fi].clone();
        record.node_id = node.node_id.clone();
        let frame_index = record.frame_index;

        let verdict = quality_gate(&record, cfg.min_quality);
        let advisory = verdict.advisory.clone().filter(|_| !verdict.pass);
        w.push(
            ts,
            RunEvent::Frame {
                config_version: snap.version,
                quality: verdict,
                record: record.clone(),
            },
        );
        if let Some(message) = advisory {
            w.push(
                ts,
                RunEvent::Advisory {
                    node_id: node.node_id.clone(),
                    frame_index,
                    message,
                },
            );
        }

        let tracks = tracker.update_tracks(&record, &cfg.tracker_params)?;
        let candidates = evaluate_frame(&tracks, cfg, &node.source_node, frame_index, ts);
        w.push(
            ts,
            RunEvent::Tracks {
                node_id: node.node_id.clone(),
                frame_index,
                tracks: tracks.clone(),
                candidates: candidates.iter().map(|c| c.track_id).collect(),
            },
        );

        for c in &candidates {
            let accepted = debounce(
                c,
                &mut ledger,
                &targets,
                ts,
                cfg.debounce_window,
                next_event_id,
            );
            let Some((_, event)) = accepted.first().cloned() else {
                continue;
            };
            next_event_id += 1;
            let devices: Vec<String> = accepted.into_iter().map(|(d, _)| d).collect();
            w.push(ts, RunEvent::Alert(event.clone()));
            for (device, outcome) in
                devices
                    .iter()
                    .zip(dispatch(&event, &spec.topology, &devices, ts))
            {
                match outcome {
                    Ok(rec) => w.push(ts, RunEvent::Delivery(rec)),
                    Err(e) => w.push(
                        ts,
                        RunEvent::DeliveryFailed {
                            event_id: event.event_id,
                            device_id: device.clone(),
                            reason: e.to_string(),
                        },
                    ),
                }
            }
        }

        if let Some(previews) = &ctx.previews {
            previews.lock().expect("preview lock").insert(
                node.node_id.clone(),
                FramePreview {
                    node_id: node.node_id.clone(),
                    source_node: node.source_node.clone(),
                    config_version: snap.version,
                    record,
                    tracks,
                    zone: cfg.zones.get(&node.source_node).cloned(),
                },
            );
        }
        frames_processed += 1;
        last_timestamp = Some(ts);
    }

    stats.frames = frames_processed;
    if spec.clock_mode == ClockMode::Realtime && frames_processed > 0 {
        stats.mean_pacing_error_ms = pacing_sum / frames_processed as f64;
    }
    if let Some(bus) = &ctx.bus {
        bus.publish(StreamBody::Lifecycle(Lifecycle::RunFinished {
            run_id: ctx.run_id,
            status,
            frames_processed,
        }));
    }
    Ok(RunOutcome {
        log: RunLog {
            header,
            entries: w.entries,
            footer: RunFooter {
                status,
                frames_processed,
                last_timestamp,
            },
        },
        stats,
    })
}

/// Runs `spec` in isolation: its own config store, no subscribers, no stop
/// signal.
pub fn run_replay<T: Scalar>(spec: &RunSpec<T>) -> Result<RunLog<T>, ControlError> {
    let ctx = RunContext::standalone(spec.config.clone())?;
    execute(spec, &ctx).map(|o| o.log)
}
