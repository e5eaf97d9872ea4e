//! Wearable alert mesh model: device registry, hop routing from the
//! coordinator radio, hop-count latency and pulse scheduling.
//!
//! Latency is anchored on two measured round-trip figures for an 802.15.4
//! mesh (18 ms for one hop, 100 ms for four) and interpolated linearly,
//! extrapolating past four hops. One-way delivery is taken as half the
//! round trip. There is no loss or contention model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alertgate::AlertEvent;
use crate::num::Scalar;

/// Reserved id of the processing node's radio.
pub const COORDINATOR: &str = "coordinator";

pub const ROUND_TRIP_ONE_HOP_MS: f64 = 18.0;
pub const ROUND_TRIP_FOUR_HOPS_MS: f64 = 100.0;

/// Haptic pulse length; visual devices mirror it.
pub const PULSE_MS: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlertNetError {
    #[error("device {0} is not reachable from the coordinator")]
    Unreachable(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("hop count must be >= 1, got {0}")]
    DomainError(u32),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Alertband,
    Alertbeacon,
    HaloLight,
    ExpansionNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub device_id: String,
    pub kind: DeviceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<String>,
}

/// Topology file form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    pub devices: Vec<Device>,
    /// Undirected links; endpoints are device ids or `"coordinator"`.
    pub links: Vec<(String, String)>,
}

/// Validated, connected mesh. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "TopologyDocument", into = "TopologyDocument")]
pub struct MeshTopology {
    devices: BTreeMap<String, Device>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
    links: Vec<(String, String)>,
    hops: BTreeMap<String, u32>,
}

impl TryFrom<TopologyDocument> for MeshTopology {
    type Error = AlertNetError;

    fn try_from(doc: TopologyDocument) -> Result<Self, Self::Error> {
        let bad = |m: String| Err(AlertNetError::InvalidTopology(m));
        let mut devices = BTreeMap::new();
        for d in &doc.devices {
            if d.device_id == COORDINATOR {
                return bad(format!("device id {COORDINATOR:?} is reserved"));
            }
            if devices.insert(d.device_id.clone(), d.clone()).is_some() {
                return bad(format!("duplicate device id {}", d.device_id));
            }
        }
        let mut adjacency: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        adjacency.insert(COORDINATOR.to_string(), BTreeSet::new());
        for id in devices.keys() {
            adjacency.insert(id.clone(), BTreeSet::new());
        }
        for (a, b) in &doc.links {
            if a == b {
                return bad(format!("self link on {a}"));
            }
            for end in [a, b] {
                if !adjacency.contains_key(end) {
                    return bad(format!("link references unknown device {end}"));
                }
            }
            adjacency.get_mut(a).unwrap().insert(b.clone());
            adjacency.get_mut(b).unwrap().insert(a.clone());
        }
        let hops = bfs_hops(&adjacency);
        if let Some(orphan) = devices.keys().find(|d| !hops.contains_key(*d)) {
            return bad(format!(
                "device {orphan} is not connected to the coordinator"
            ));
        }
        Ok(Self {
            devices,
            adjacency,
            links: doc.links,
            hops,
        })
    }
}

impl From<MeshTopology> for TopologyDocument {
    fn from(t: MeshTopology) -> Self {
        Self {
            devices: t.devices.into_values().collect(),
            links: t.links,
        }
    }
}

fn bfs_hops(adjacency: &BTreeMap<String, BTreeSet<String>>) -> BTreeMap<String, u32> {
    let mut hops = BTreeMap::new();
    let mut queue = VecDeque::from([(COORDINATOR.to_string(), 0u32)]);
    let mut seen = BTreeSet::from([COORDINATOR.to_string()]);
    while let Some((node, d)) = queue.pop_front() {
        if node != COORDINATOR {
            hops.insert(node.clone(), d);
        }
        for next in &adjacency[&node] {
            if seen.insert(next.clone()) {
                queue.push_back((next.clone(), d + 1));
            }
        }
    }
    hops
}

impl MeshTopology {
    pub fn from_document(doc: TopologyDocument) -> Result<Self, AlertNetError> {
        doc.try_into()
    }

    /// One alertband linked directly to the coordinator.
    pub fn single_band(device_id: &str) -> Self {
        TopologyDocument {
            devices: vec![Device {
                device_id: device_id.to_string(),
                kind: DeviceKind::Alertband,
                position: None,
            }],
            links: vec![(COORDINATOR.to_string(), device_id.to_string())],
        }
        .try_into()
        .expect("single-band topology is valid")
    }

    pub fn device(&self, id: &str) -> Option<&Device> {
        self.devices.get(id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &Device> {
        self.devices.values()
    }

    pub fn device_ids(&self) -> Vec<String> {
        self.devices.keys().cloned().collect()
    }

    pub fn neighbors(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.adjacency.get(id)
    }
}

/// Shortest-path hop count from the coordinator.
pub fn route_hops(topology: &MeshTopology, device_id: &str) -> Result<u32, AlertNetError> {
    if !topology.devices.contains_key(device_id) {
        return Err(AlertNetError::UnknownDevice(device_id.to_string()));
    }
    topology
        .hops
        .get(device_id)
        .copied()
        .ok_or_else(|| AlertNetError::Unreachable(device_id.to_string()))
}

/// Round-trip latency in ms through the two anchors.
pub fn round_trip_latency<T: Scalar>(hops: u32) -> Result<T, AlertNetError> {
    if hops < 1 {
        return Err(AlertNetError::DomainError(hops));
    }
    // multiply before dividing so hops = 4 lands on the anchor exactly
    let rise = T::lit(ROUND_TRIP_FOUR_HOPS_MS - ROUND_TRIP_ONE_HOP_MS);
    let extra = T::from_u32(hops - 1).unwrap() * rise / T::lit(3.0);
    Ok(T::lit(ROUND_TRIP_ONE_HOP_MS) + extra)
}

/// One-way delivery latency in ms: half the round trip.
pub fn hop_latency<T: Scalar>(hops: u32) -> Result<T, AlertNetError> {
    Ok(round_trip_latency::<T>(hops)? / T::lit(2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Pulse<T> {
    pub start: T,
    pub duration: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct DeliveryRecord<T> {
    pub event_id: u64,
    pub device_id: String,
    pub hops: u32,
    pub dispatch_time: T,
    pub delivery_time: T,
    pub pulse: Pulse<T>,
}

impl<T: Scalar> DeliveryRecord<T> {
    pub fn latency(&self) -> T {
        self.delivery_time - self.dispatch_time
    }
}

/// Per-target outcome of [`dispatch`].
pub type DispatchOutcome<T> = Result<DeliveryRecord<T>, AlertNetError>;

/// One delivery per target, in target order; failures are reported per
/// device without affecting the others.
pub fn dispatch<T: Scalar>(
    event: &AlertEvent<T>,
    topology: &MeshTopology,
    targets: &[String],
    clock: T,
) -> Vec<DispatchOutcome<T>> {
    targets
        .iter()
        .map(|device_id| {
            let hops = route_hops(topology, device_id)?;
            let delivery_time = clock + hop_latency::<T>(hops)?;
            Ok(DeliveryRecord {
                event_id: event.event_id,
                device_id: device_id.clone(),
                hops,
                dispatch_time: clock,
                delivery_time,
                pulse: Pulse {
                    start: delivery_time,
                    duration: T::lit(PULSE_MS),
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clipstore::DetectionClass;
    use crate::geom::Rect;

    fn dev(id: &str, kind: DeviceKind) -> Device {
        Device {
            device_id: id.into(),
            kind,
            position: None,
        }
    }

    fn link(a: &str, b: &str) -> (String, String) {
        (a.into(), b.into())
    }

    fn chain() -> MeshTopology {
        MeshTopology::from_document(TopologyDocument {
            devices: ["a", "b", "c", "d"]
                .iter()
                .map(|d| dev(d, DeviceKind::Alertband))
                .collect(),
            links: vec![
                link(COORDINATOR, "a"),
                link("a", "b"),
                link("b", "c"),
                link("c", "d"),
            ],
        })
        .unwrap()
    }

    fn event() -> AlertEvent<f64> {
        AlertEvent {
            event_id: 5,
            timestamp: 1000.0,
            node_id: "cam0".into(),
            frame_index: 5,
            track_id: 0,
            class: DetectionClass::Person,
            confidence_at_alert: 0.9,
            bbox: Rect::new(0.1, 0.1, 0.2, 0.2).unwrap(),
        }
    }

    #[test]
    fn hops_adjacent_chain_diamond() {
        let t = chain();
        assert_eq!(route_hops(&t, "a").unwrap(), 1);
        assert_eq!(route_hops(&t, "d").unwrap(), 4);
        let diamond = MeshTopology::from_document(TopologyDocument {
            devices: ["l", "r", "x"]
                .iter()
                .map(|d| dev(d, DeviceKind::HaloLight))
                .collect(),
            links: vec![
                link(COORDINATOR, "l"),
                link(COORDINATOR, "r"),
                link("l", "x"),
                link("r", "x"),
            ],
        })
        .unwrap();
        assert_eq!(route_hops(&diamond, "x").unwrap(), 2);
        assert!(matches!(
            route_hops(&diamond, "zz"),
            Err(AlertNetError::UnknownDevice(_))
        ));
    }

    #[test]
    fn partitioned_topology_rejected() {
        let r = MeshTopology::from_document(TopologyDocument {
            devices: vec![
                dev("a", DeviceKind::Alertband),
                dev("b", DeviceKind::Alertband),
            ],
            links: vec![link(COORDINATOR, "a")],
        });
        assert!(matches!(r, Err(AlertNetError::InvalidTopology(_))));
    }

    #[test]
    fn duplicate_and_reserved_ids_rejected() {
        let dup = TopologyDocument {
            devices: vec![
                dev("a", DeviceKind::Alertband),
                dev("a", DeviceKind::Alertband),
            ],
            links: vec![link(COORDINATOR, "a")],
        };
        assert!(MeshTopology::from_document(dup).is_err());
        let reserved = TopologyDocument {
            devices: vec![dev(COORDINATOR, DeviceKind::Alertband)],
            links: vec![],
        };
        assert!(MeshTopology::from_document(reserved).is_err());
    }

    #[test]
    fn latency_anchors_exact() {
        assert_eq!(round_trip_latency::<f64>(1).unwrap(), 18.0);
        assert_eq!(round_trip_latency::<f64>(4).unwrap(), 100.0);
        assert_eq!(hop_latency::<f64>(1).unwrap(), 9.0);
        assert_eq!(hop_latency::<f64>(4).unwrap(), 50.0);
        assert_eq!(round_trip_latency::<f32>(4).unwrap(), 100.0);
        assert!(matches!(
            hop_latency::<f64>(0),
            Err(AlertNetError::DomainError(0))
        ));
    }

    #[test]
    fn latency_interpolates_two_hops() {
        let rt = round_trip_latency::<f64>(2).unwrap();
        assert!((rt - (18.0 + 82.0 / 3.0)).abs() < 1e-12);
        assert!((rt - 45.33).abs() < 0.005);
        assert!((hop_latency::<f64>(2).unwrap() - 22.67).abs() < 0.005);
    }

    #[test]
    fn latency_strictly_increasing() {
        for h in 1..40 {
            assert!(hop_latency::<f64>(h + 1).unwrap() > hop_latency::<f64>(h).unwrap());
        }
    }

    #[test]
    fn dispatch_one_band() {
        let t = MeshTopology::single_band("band");
        let out = dispatch(&event(), &t, &["band".to_string()], 1000.0);
        let r = out[0].as_ref().unwrap();
        assert_eq!(r.delivery_time, 1009.0);
        assert_eq!(
            r.pulse,
            Pulse {
                start: 1009.0,
                duration: 2000.0
            }
        );
        assert_eq!(r.hops, 1);
    }

    #[test]
    fn dispatch_per_device_latency_and_partial_failure() {
        let t = chain();
        let out = dispatch(
            &event(),
            &t,
            &["a".to_string(), "ghost".to_string(), "d".to_string()],
            0.0,
        );
        assert_eq!(out[0].as_ref().unwrap().delivery_time, 9.0);
        assert!(out[1].is_err());
        assert_eq!(out[2].as_ref().unwrap().delivery_time, 50.0);
        assert!(dispatch(&event(), &t, &[], 0.0).is_empty());
    }

    #[test]
    fn topology_json_roundtrip() {
        let t = chain();
        let s = serde_json::to_string(&t).unwrap();
        let back: MeshTopology = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"devices":[{"device_id":"a","kind":"alertband"}],"links":[],"extra":0}"#;
        assert!(serde_json::from_str::<MeshTopology>(bad).is_err());
    }
}
