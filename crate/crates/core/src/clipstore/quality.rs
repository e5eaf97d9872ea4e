use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::FrameRecord;
use crate::num::Scalar;

/// Outcome of the image-quality check. A failing verdict is advisory only;
/// the frame still goes to the tracker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QualityVerdict {
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory: Option<String>,
}

impl QualityVerdict {
    pub fn passed() -> Self {
        Self {
            pass: true,
            advisory: None,
        }
    }
}

/// Closed threshold: `quality >= min_quality` passes.
pub fn quality_gate<T: Scalar>(frame: &FrameRecord<T>, min_quality: T) -> QualityVerdict {
    if frame.quality >= min_quality {
        QualityVerdict::passed()
    } else {
        QualityVerdict {
            pass: false,
            advisory: Some(format!(
                "node {} frame {}: image quality {:.3} below operating minimum {:.3}",
                frame.node_id, frame.frame_index, frame.quality, min_quality
            )),
        }
    }
}
