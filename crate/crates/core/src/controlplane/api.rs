use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::bus::{EventBus, StreamMessage, Subscription, EVENT_BUFFER};
use super::config::{
    ConfigChange, ConfigPatch, ConfigSnapshot, ConfigStore, SetModePayload, SetZonePayload,
};
use super::engine::{
    execute, load_clips, plan_nodes, ClipSource, FramePreview, PreviewStore, RunContext,
    RunOutcome, RunSpec, DEFAULT_DUPLICATION,
};
use super::ControlError;
use crate::alertgate::{PipelineConfig, ValidationError};
use crate::alertnet::{MeshTopology, TopologyDocument};
use crate::num::Scalar;
use crate::runlog::{CaptureMode, ClockMode, EventKind, RunNode};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct StartRunPayload {
    /// Clip bundle directories, as seen by the server.
    pub clips: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<ClockMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplication: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture: Option<CaptureMode>,
    /// Where the server writes the run log when the run ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SubscribePayload {
    /// Empty means every kind.
    #[serde(default)]
    pub kinds: Vec<EventKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PreviewPayload {
    pub node_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub enum ControlBody<T> {
    GetConfig,
    SetConfig(ConfigPatch<T>),
    SetZone(SetZonePayload<T>),
    SetMode(SetModePayload),
    StartRun(StartRunPayload),
    StopRun,
    SubscribeEvents(SubscribePayload),
    FramePreview(PreviewPayload),
}

/// A request on the control channel:
/// `{"request_id": "...", "kind": "...", "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ControlMessage<T> {
    pub request_id: String,
    #[serde(flatten)]
    pub body: ControlBody<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    DuplicateRequestId,
    ValidationError,
    RunActive,
    NoActiveRun,
    ClipLoadError,
    TopologyUnreachable,
    InvalidSpec,
    NotFound,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub enum ReplyResult<T> {
    Config {
        version: u64,
        config: PipelineConfig<T>,
    },
    RunStarted {
        run_id: u64,
        nodes: Vec<RunNode>,
    },
    RunStopping {
        run_id: u64,
    },
    Subscribed {
        kinds: Vec<EventKind>,
        buffer: usize,
    },
    Preview {
        preview: FramePreview<T>,
    },
}

/// Exactly one reply per request, echoing its `request_id` (null only when
/// the request was too malformed to carry one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ControlReply<T> {
    pub request_id: Option<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ReplyResult<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl<T> ControlReply<T> {
    pub fn success(request_id: &str, result: ReplyResult<T>) -> Self {
        Self {
            request_id: Some(request_id.to_string()),
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn failure(request_id: Option<&str>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            request_id: request_id.map(str::to_string),
            ok: false,
            result: None,
            error: Some(ErrorBody {
                code,
                message: message.into(),
            }),
        }
    }
}

/// Everything the server sends on a connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub enum ServerMessage<T> {
    Reply(ControlReply<T>),
    Event(StreamMessage<T>),
}

/// Parses one request. On failure returns the reply to send, carrying the
/// request id when one could be recovered.
pub fn parse_message<T: Scalar>(text: &str) -> Result<ControlMessage<T>, ControlReply<T>> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ControlReply::failure(None, ErrorCode::Malformed, e.to_string()))?;
    let rid = value
        .get("request_id")
        .and_then(|v| v.as_str())
        .map(str::to_string);
    let fail = |m: String| ControlReply::failure(rid.as_deref(), ErrorCode::Malformed, m);
    let obj = value
        .as_object()
        .ok_or_else(|| fail("request must be an object".into()))?;
    if let Some(k) = obj
        .keys()
        .find(|k| !matches!(k.as_str(), "request_id" | "kind" | "payload"))
    {
        return Err(fail(format!("unknown field {k:?}")));
    }
    if rid.is_none() {
        return Err(fail("missing string request_id".into()));
    }
    serde_json::from_value(value.clone()).map_err(|e| fail(e.to_string()))
}

fn error_code(e: &ControlError) -> ErrorCode {
    match e {
        ControlError::RunActive => ErrorCode::RunActive,
        ControlError::NoActiveRun => ErrorCode::NoActiveRun,
        ControlError::ClipLoad { .. } => ErrorCode::ClipLoadError,
        ControlError::TopologyUnreachable(_) => ErrorCode::TopologyUnreachable,
        ControlError::InvalidSpec(_) => ErrorCode::InvalidSpec,
        ControlError::Validation(_) => ErrorCode::ValidationError,
        ControlError::Tracker(_) | ControlError::Io(_) => ErrorCode::Internal,
    }
}

/// Per-connection state: the request ids already seen.
#[derive(Debug, Default)]
pub struct Session {
    seen: HashSet<String>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }
}

struct ActiveRun<T> {
    run_id: u64,
    stop: Arc<AtomicBool>,
    handle: JoinHandle<Result<RunOutcome<T>, ControlError>>,
}

/// Owns the live config, the event bus and the (single) active run.
pub struct ControlPlane<T: Scalar> {
    config: Arc<ConfigStore<T>>,
    bus: Arc<EventBus<T>>,
    previews: Arc<PreviewStore<T>>,
    active: Mutex<Option<ActiveRun<T>>>,
    next_run_id: AtomicU64,
    default_topology: MeshTopology,
}

impl<T: Scalar> Default for ControlPlane<T> {
    fn default() -> Self {
        Self::new(
            PipelineConfig::default(),
            MeshTopology::single_band("band0"),
        )
        .expect("default config is valid")
    }
}

impl<T: Scalar> ControlPlane<T> {
    pub fn new(
        config: PipelineConfig<T>,
        default_topology: MeshTopology,
    ) -> Result<Self, ValidationError> {
        Ok(Self {
            config: Arc::new(ConfigStore::new(config)?),
            bus: Arc::new(EventBus::new()),
            previews: Arc::new(PreviewStore::default()),
            active: Mutex::new(None),
            next_run_id: AtomicU64::new(1),
            default_topology,
        })
    }

    pub fn config(&self) -> Arc<ConfigSnapshot<T>> {
        self.config.snapshot()
    }

    pub fn apply(
        &self,
        change: &ConfigChange<T>,
    ) -> Result<Arc<ConfigSnapshot<T>>, ValidationError> {
        self.config.apply(change)
    }

    pub fn bus(&self) -> &Arc<EventBus<T>> {
        &self.bus
    }

    pub fn subscribe(&self, kinds: &[EventKind]) -> Subscription<T> {
        self.bus.subscribe(kinds)
    }

    pub fn preview(&self, node_id: &str) -> Option<FramePreview<T>> {
        self.previews
            .lock()
            .expect("preview lock")
            .get(node_id)
            .cloned()
    }

    /// True while a run thread is still going.
    pub fn is_running(&self) -> bool {
        self.active
            .lock()
            .expect("run lock")
            .as_ref()
            .is_some_and(|r| !r.handle.is_finished())
    }

    /// Loads the clips and starts `spec` on a background thread, returning
    /// the run id and its node table. The run spec's config becomes the live
    /// config; later changes apply from the next frame on.
    pub fn start_run(
        &self,
        mut spec: RunSpec<T>,
        out: Option<PathBuf>,
    ) -> Result<(u64, Vec<RunNode>), ControlError>
    where
        T: 'static,
    {
        let mut slot = self.active.lock().expect("run lock");
        if slot.as_ref().is_some_and(|r| !r.handle.is_finished()) {
            return Err(ControlError::RunActive);
        }
        if let Some(prev) = slot.take() {
            let _ = prev.handle.join();
        }
        spec.check()?;
        let clips = load_clips(&spec)?;
        let nodes = plan_nodes(&clips, spec.duplication)
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        spec.clips = clips.into_iter().map(ClipSource::Loaded).collect();
        self.config.replace(spec.config.clone())?;
        let run_id = self.next_run_id.fetch_add(1, Ordering::SeqCst);
        let stop = Arc::new(AtomicBool::new(false));
        let ctx = RunContext {
            run_id,
            config: self.config.clone(),
            bus: Some(self.bus.clone()),
            stop: stop.clone(),
            previews: Some(self.previews.clone()),
        };
        self.previews.lock().expect("preview lock").clear();
        let handle = std::thread::Builder::new()
            .name(format!("run-{run_id}"))
            .spawn(move || {
                let outcome = execute(&spec, &ctx)?;
                if let Some(path) = out {
                    outcome
                        .log
                        .save(&path)
                        .map_err(|e| ControlError::Io(e.to_string()))?;
                }
                Ok(outcome)
            })
            .map_err(|e| ControlError::Io(e.to_string()))?;
        *slot = Some(ActiveRun {
            run_id,
            stop,
            handle,
        });
        Ok((run_id, nodes))
    }

    /// Raises the stop flag of the active run; the run finishes its current
    /// frame and ends with an aborted log.
    pub fn stop_run(&self) -> Result<u64, ControlError> {
        let slot = self.active.lock().expect("run lock");
        match slot.as_ref() {
            Some(r) if !r.handle.is_finished() => {
                r.stop.store(true, Ordering::SeqCst);
                Ok(r.run_id)
            }
            _ => Err(ControlError::NoActiveRun),
        }
    }

    /// Blocks until the current (or last) run ends and returns its outcome.
    /// `None` when no run was started since the last call.
    pub fn wait_run(&self) -> Option<Result<RunOutcome<T>, ControlError>> {
        let run = self.active.lock().expect("run lock").take()?;
        Some(
            run.handle
                .join()
                .unwrap_or_else(|_| Err(ControlError::Io("run thread panicked".into()))),
        )
    }

    /// Runs `spec` on the calling thread, refusing while another run is
    /// active.
    pub fn run_blocking(&self, spec: RunSpec<T>) -> Result<RunOutcome<T>, ControlError>
    where
        T: 'static,
    {
        self.start_run(spec, None)?;
        self.wait_run().expect("run was just started")
    }

    fn spec_from_payload(&self, p: &StartRunPayload) -> Result<RunSpec<T>, ControlError> {
        let topology = match &p.topology {
            Some(doc) => MeshTopology::from_document(doc.clone())
                .map_err(|e| ControlError::TopologyUnreachable(e.to_string()))?,
            None => self.default_topology.clone(),
        };
        let mut spec = RunSpec::new(
            p.clips
                .iter()
                .map(|c| ClipSource::Path(PathBuf::from(c)))
                .collect(),
            self.config.snapshot().config.clone(),
            topology,
        );
        spec.clock_mode = p.clock.unwrap_or_default();
        spec.duplication = p.duplication.unwrap_or(DEFAULT_DUPLICATION);
        spec.seed = p.seed.unwrap_or(0);
        spec.capture = p.capture.unwrap_or_default();
        Ok(spec)
    }

    /// Handles one parsed request. A `subscribe_events` request also returns
    /// the subscription, which the caller forwards to its client.
    pub fn handle(
        &self,
        session: &mut Session,
        msg: ControlMessage<T>,
    ) -> (ControlReply<T>, Option<Subscription<T>>)
    where
        T: 'static,
    {
        let rid = msg.request_id.clone();
        if !session.seen.insert(rid.clone()) {
            return (
                ControlReply::failure(
                    Some(&rid),
                    ErrorCode::DuplicateRequestId,
                    format!("request_id {rid:?} already used on this connection"),
                ),
                None,
            );
        }
        let fail =
            |e: ControlError| ControlReply::failure(Some(&rid), error_code(&e), e.to_string());
        let config_reply = |s: Arc<ConfigSnapshot<T>>| {
            ControlReply::success(
                &rid,
                ReplyResult::Config {
                    version: s.version,
                    config: s.config.clone(),
                },
            )
        };
        let change = |c: ConfigChange<T>| match self.apply(&c) {
            Ok(s) => config_reply(s),
            Err(e) => fail(e.into()),
        };
        let reply = match msg.body {
            ControlBody::GetConfig => config_reply(self.config()),
            ControlBody::SetConfig(p) => change(ConfigChange::SetConfig(p)),
            ControlBody::SetZone(p) => change(ConfigChange::SetZone(p)),
            ControlBody::SetMode(p) => change(ConfigChange::SetMode(p)),
            ControlBody::StartRun(p) => match self
                .spec_from_payload(&p)
                .and_then(|spec| self.start_run(spec, p.out.as_ref().map(PathBuf::from)))
            {
                Ok((run_id, nodes)) => {
                    ControlReply::success(&rid, ReplyResult::RunStarted { run_id, nodes })
                }
                Err(e) => fail(e),
            },
            ControlBody::StopRun => match self.stop_run() {
                Ok(run_id) => ControlReply::success(&rid, ReplyResult::RunStopping { run_id }),
                Err(e) => fail(e),
            },
            ControlBody::SubscribeEvents(p) => {
                let sub = self.subscribe(&p.kinds);
                return (
                    ControlReply::success(
                        &rid,
                        ReplyResult::Subscribed {
                            kinds: p.kinds,
                            buffer: EVENT_BUFFER,
                        },
                    ),
                    Some(sub),
                );
            }
            ControlBody::FramePreview(p) => match self.preview(&p.node_id) {
                Some(preview) => ControlReply::success(&rid, ReplyResult::Preview { preview }),
                None => ControlReply::failure(
                    Some(&rid),
                    ErrorCode::NotFound,
                    format!("no frame seen yet on node {}", p.node_id),
                ),
            },
        };
        (reply, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alertgate::Mode;

    fn parse(s: &str) -> Result<ControlMessage<f64>, ControlReply<f64>> {
        parse_message(s)
    }

    #[test]
    fn envelope_shapes() {
        let m = parse(r#"{"request_id":"a","kind":"get_config"}"#).unwrap();
        assert_eq!(m.body, ControlBody::GetConfig);
        let m =
            parse(r#"{"request_id":"b","kind":"set_mode","payload":{"mode":"certain"}}"#).unwrap();
        assert_eq!(
            m.body,
            ControlBody::SetMode(SetModePayload {
                mode: Mode::Certain
            })
        );
        let m = parse(
            r#"{"request_id":"c","kind":"set_zone","payload":{"node_id":"cam0","vertices":[[0,0],[1,0],[0,1]]}}"#,
        )
        .unwrap();
        assert!(matches!(m.body, ControlBody::SetZone(ref z) if z.vertices.len() == 3));
        let m =
            parse(r#"{"request_id":"d","kind":"subscribe_events","payload":{"kinds":["alert"]}}"#)
                .unwrap();
        assert!(
            matches!(m.body, ControlBody::SubscribeEvents(ref p) if p.kinds == vec![EventKind::Alert])
        );
    }

    #[test]
    fn round_trip_serialization() {
        let m = ControlMessage::<f64> {
            request_id: "x".into(),
            body: ControlBody::SetConfig(ConfigPatch {
                alert_confidence_threshold: Some(0.55),
                ..Default::default()
            }),
        };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(parse(&s).unwrap(), m);
    }

    #[test]
    fn malformed_requests_get_replies() {
        let r = parse(r#"{"request_id":"e","kind":"get_config","extra":1}"#).unwrap_err();
        assert_eq!(r.request_id.as_deref(), Some("e"));
        assert_eq!(r.error.unwrap().code, ErrorCode::Malformed);
        let r =
            parse(r#"{"request_id":"f","kind":"set_config","payload":{"bogus":1}}"#).unwrap_err();
        assert_eq!(r.request_id.as_deref(), Some("f"));
        let r = parse(r#"{"request_id":"g","kind":"launch_rockets"}"#).unwrap_err();
        assert_eq!(r.request_id.as_deref(), Some("g"));
        let r = parse("not json").unwrap_err();
        assert_eq!(r.request_id, None);
        let r = parse(r#"{"kind":"get_config"}"#).unwrap_err();
        assert_eq!(r.request_id, None);
    }

    #[test]
    fn duplicate_request_id_rejected() {
        let plane = ControlPlane::<f64>::default();
        let mut s = Session::new();
        let msg = parse(r#"{"request_id":"1","kind":"get_config"}"#).unwrap();
        assert!(plane.handle(&mut s, msg.clone()).0.ok);
        let (r, _) = plane.handle(&mut s, msg.clone());
        assert_eq!(r.error.unwrap().code, ErrorCode::DuplicateRequestId);
        assert_eq!(r.request_id.as_deref(), Some("1"));
        // ids are per connection
        assert!(plane.handle(&mut Session::new(), msg).0.ok);
    }

    #[test]
    fn stop_without_run() {
        let plane = ControlPlane::<f64>::default();
        let (r, _) = plane.handle(
            &mut Session::new(),
            parse(r#"{"request_id":"s","kind":"stop_run"}"#).unwrap(),
        );
        assert_eq!(r.error.unwrap().code, ErrorCode::NoActiveRun);
    }
}
