//! Deterministic replay engine for a construction-site hazard alerting
//! pipeline: recorded detector streams go through tracking, zone and
//! confidence gating, debounced dispatch over a wearable mesh, and frame-wise
//! evaluation against ground truth.
//!
//! Everything numeric is generic over [`num::Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod alertgate;
pub mod alertnet;
pub mod clipstore;
pub mod controlplane;
pub mod evalharness;
pub mod geom;
pub mod num;
pub mod runlog;
pub mod schema;
pub mod tracker;

pub use num::Scalar;

pub type Rect = geom::Rect<f64>;
pub type Point = geom::Point<f64>;
pub type Polygon = geom::Polygon<f64>;
pub type Detection = clipstore::Detection<f64>;
pub type FrameRecord = clipstore::FrameRecord<f64>;
pub type Clip = clipstore::Clip<f64>;
pub type GroundTruthPerson = clipstore::GroundTruthPerson<f64>;
pub type ScenarioSpec = clipstore::ScenarioSpec<f64>;
pub type Track = tracker::Track<f64>;
pub type TrackerParams = tracker::TrackerParams<f64>;
pub type TrackerState = tracker::TrackerState<f64>;
pub type Zone = alertgate::Zone<f64>;
pub type PipelineConfig = alertgate::PipelineConfig<f64>;
pub type AlertCandidate = alertgate::AlertCandidate<f64>;
pub type AlertEvent = alertgate::AlertEvent<f64>;
pub type DeliveryRecord = alertnet::DeliveryRecord<f64>;
pub type RunLog = runlog::RunLog<f64>;

pub type RectF32 = geom::Rect<f32>;
pub type ClipF32 = clipstore::Clip<f32>;
pub type PipelineConfigF32 = alertgate::PipelineConfig<f32>;
