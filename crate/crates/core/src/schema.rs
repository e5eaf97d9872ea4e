//! JSON Schemas for every document and message crossing a process boundary.

use schemars::gen::SchemaSettings;
use schemars::schema::RootSchema;
use schemars::JsonSchema;

use crate::alertgate::{ConfigDocument, PipelineConfig};
use crate::alertnet::TopologyDocument;
use crate::clipstore::{ClipHeader, FrameRecord, GroundTruthPerson, ScenarioSpec};
use crate::controlplane::{ControlMessage, ControlReply, ServerMessage};
use crate::evalharness::MetricsReport;
use crate::runlog::Line;

fn root<S: JsonSchema>() -> RootSchema {
    SchemaSettings::draft07()
        .into_generator()
        .into_root_schema_for::<S>()
}

/// `(file name, schema)` pairs, in a fixed order.
pub fn published() -> Vec<(&'static str, RootSchema)> {
    vec![
        ("config.schema.json", root::<ConfigDocument<f64>>()),
        ("pipeline_config.schema.json", root::<PipelineConfig<f64>>()),
        ("topology.schema.json", root::<TopologyDocument>()),
        ("scenario.schema.json", root::<ScenarioSpec<f64>>()),
        ("clip_header.schema.json", root::<ClipHeader<f64>>()),
        ("frame_record.schema.json", root::<FrameRecord<f64>>()),
        ("ground_truth.schema.json", root::<GroundTruthPerson<f64>>()),
        ("runlog_line.schema.json", root::<Line<f64>>()),
        ("control_message.schema.json", root::<ControlMessage<f64>>()),
        ("control_reply.schema.json", root::<ControlReply<f64>>()),
        ("server_message.schema.json", root::<ServerMessage<f64>>()),
        ("metrics_report.schema.json", root::<MetricsReport<f64>>()),
    ]
}

pub fn render(schema: &RootSchema) -> String {
    let mut s = serde_json::to_string_pretty(schema).expect("schemas serialize");
    s.push('\n');
    s
}
