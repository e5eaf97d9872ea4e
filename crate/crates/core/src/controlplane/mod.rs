//! Run orchestration, the live config and the control API.

mod api;
mod bus;
mod config;
mod engine;
pub mod server;

use thiserror::Error;

use crate::alertgate::ValidationError;
use crate::clipstore::ClipError;
use crate::tracker::TrackerError;

pub use api::{
    parse_message, ControlBody, ControlMessage, ControlPlane, ControlReply, ErrorBody, ErrorCode,
    PreviewPayload, ReplyResult, ServerMessage, Session, StartRunPayload, SubscribePayload,
};
pub use bus::{
    BusError, EventBus, Lifecycle, Notice, StreamBody, StreamMessage, Subscription, EVENT_BUFFER,
};
pub use config::{
    apply_config, ConfigChange, ConfigPatch, ConfigSnapshot, ConfigStore, SetModePayload,
    SetZonePayload, TrackerParamsPatch,
};
pub use engine::{
    execute, run_replay, ClipSource, FramePreview, RunContext, RunOutcome, RunSpec, RunStats,
    DEFAULT_DUPLICATION,
};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("a run is already active")]
    RunActive,
    #[error("no active run")]
    NoActiveRun,
    #[error("cannot load clip {clip}: {source}")]
    ClipLoad {
        clip: String,
        #[source]
        source: ClipError,
    },
    #[error("topology unreachable: {0}")]
    TopologyUnreachable(String),
    #[error("invalid run spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("i/o: {0}")]
    Io(String),
}
