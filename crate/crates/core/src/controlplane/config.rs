use std::collections::BTreeSet;
use std::sync::{Arc, RwLock};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::alertgate::{Mode, PipelineConfig, ValidationError, Zone};
use crate::clipstore::DetectionClass;
use crate::geom::Point;
use crate::num::Scalar;

/// Partial update of the tracker parameters; absent fields keep their value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct TrackerParamsPatch<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou_match_threshold: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_smoothing_alpha: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirm_hits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miss_decay: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expire_after_misses: Option<u32>,
}

/// Payload of `set_config`: the slider-level fields, each optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ConfigPatch<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert_confidence_threshold: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracker_params: Option<TrackerParamsPatch<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_mask: Option<BTreeSet<DetectionClass>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_quality: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debounce_window: Option<T>,
}

/// Payload of `set_zone`. An empty vertex list clears the node's zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct SetZonePayload<T> {
    pub node_id: String,
    #[serde(default)]
    pub vertices: Vec<Point<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SetModePayload {
    pub mode: Mode,
}

/// A config-changing control request.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigChange<T> {
    SetConfig(ConfigPatch<T>),
    SetZone(SetZonePayload<T>),
    SetMode(SetModePayload),
}

/// Returns the complete config that results from applying `change` to
/// `current`. `current` is never modified.
pub fn apply_config<T: Scalar>(
    current: &PipelineConfig<T>,
    change: &ConfigChange<T>,
) -> Result<PipelineConfig<T>, ValidationError> {
    let mut next = current.clone();
    match change {
        ConfigChange::SetConfig(p) => {
            if let Some(v) = p.alert_confidence_threshold {
                next.alert_confidence_threshold = v;
            }
            if let Some(tp) = &p.tracker_params {
                let t = &mut next.tracker_params;
                if let Some(v) = tp.iou_match_threshold {
                    t.iou_match_threshold = v;
                }
                if let Some(v) = tp.confidence_smoothing_alpha {
                    t.confidence_smoothing_alpha = v;
                }
                if let Some(v) = tp.confirm_hits {
                    t.confirm_hits = v;
                }
                if let Some(v) = tp.miss_decay {
                    t.miss_decay = v;
                }
                if let Some(v) = tp.expire_after_misses {
                    t.expire_after_misses = v;
                }
            }
            if let Some(m) = &p.class_mask {
                next.class_mask = m.clone();
            }
            if let Some(v) = p.min_quality {
                next.min_quality = v;
            }
            if let Some(v) = p.debounce_window {
                next.debounce_window = v;
            }
        }
        ConfigChange::SetZone(z) => {
            if z.vertices.is_empty() {
                next.zones.remove(&z.node_id);
            } else {
                let zone =
                    Zone::new(z.vertices.clone()).map_err(|source| ValidationError::Zone {
                        node: z.node_id.clone(),
                        source,
                    })?;
                next.zones.insert(z.node_id.clone(), zone);
            }
        }
        ConfigChange::SetMode(m) => next.set_mode(m.mode),
    }
    next.validate()?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ConfigSnapshot<T> {
    pub version: u64,
    pub config: PipelineConfig<T>,
}

/// The live config. Readers take immutable snapshots; writers are
/// serialized and each successful write bumps the version.
#[derive(Debug)]
pub struct ConfigStore<T> {
    current: RwLock<Arc<ConfigSnapshot<T>>>,
}

impl<T: Scalar> ConfigStore<T> {
    pub fn new(config: PipelineConfig<T>) -> Result<Self, ValidationError> {
        config.validate()?;
        Ok(Self {
            current: RwLock::new(Arc::new(ConfigSnapshot { version: 1, config })),
        })
    }

    pub fn snapshot(&self) -> Arc<ConfigSnapshot<T>> {
        self.current.read().expect("config lock").clone()
    }

    pub fn apply(
        &self,
        change: &ConfigChange<T>,
    ) -> Result<Arc<ConfigSnapshot<T>>, ValidationError> {
        let mut cur = self.current.write().expect("config lock");
        let config = apply_config(&cur.config, change)?;
        *cur = Arc::new(ConfigSnapshot {
            version: cur.version + 1,
            config,
        });
        Ok(cur.clone())
    }

    /// Installs a complete config as a new version.
    pub fn replace(
        &self,
        config: PipelineConfig<T>,
    ) -> Result<Arc<ConfigSnapshot<T>>, ValidationError> {
        config.validate()?;
        let mut cur = self.current.write().expect("config lock");
        *cur = Arc::new(ConfigSnapshot {
            version: cur.version + 1,
            config,
        });
        Ok(cur.clone())
    }
}

impl<T: Scalar> Default for ConfigStore<T> {
    fn default() -> Self {
        Self::new(PipelineConfig::default()).expect("default config is valid")
    }
}
