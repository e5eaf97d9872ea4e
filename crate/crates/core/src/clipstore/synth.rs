//! Seeded clip synthesis.
//!
//! Scripted person trajectories provide exact ground truth. A detector-noise
//! model is layered on top to stand in for the visual variations met in the
//! field: glare and blur lower confidence and image quality, occlusion and
//! distance cause missed frames, clutter spawns short-lived spurious boxes.
//!
//! Each node draws from its own ChaCha stream, so output depends only on
//! `(scenario, seed)` and is identical across platforms and restarts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{Clip, ClipError, Detection, DetectionClass, FrameRecord, GroundTruthPerson};
use crate::geom::Rect;
use crate::num::Scalar;

fn default_nodes() -> Vec<String> {
    vec!["cam0".to_string()]
}

/// Scenario document: trajectories plus noise knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ScenarioSpec<T> {
    pub clip_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub frame_rate: T,
    /// Seconds.
    pub duration: T,
    #[serde(default = "default_nodes")]
    pub nodes: Vec<String>,
    #[serde(default)]
    pub persons: Vec<PersonScript<T>>,
    #[serde(default)]
    pub noise: NoiseParams<T>,
    #[serde(default)]
    pub quality: QualityParams<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct Keyframe<T> {
    pub frame: u64,
    pub bbox: Rect<T>,
}

/// A person walking through one node's view; boxes are linearly
/// interpolated between keyframes. The person is in frame from the first
/// keyframe to the last, inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct PersonScript<T> {
    pub person_id: String,
    pub node_id: String,
    pub keyframes: Vec<Keyframe<T>>,
    /// Added to the global confidence drop (distance, partial occlusion).
    #[serde(default)]
    pub extra_confidence_drop: T,
    /// Added to the global miss probability.
    #[serde(default)]
    pub extra_miss_prob: T,
}

/// Detector noise. All-zero parameters give a perfect detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct NoiseParams<T> {
    /// Per-frame probability that a visible person is not detected.
    pub miss_prob: T,
    /// Mean confidence reduction below 1.0 for true detections.
    pub confidence_drop: T,
    /// Standard deviation of per-frame confidence noise.
    pub confidence_jitter: T,
    /// Standard deviation of box-edge noise, as a fraction of box size.
    pub bbox_jitter: T,
    /// Per-frame probability that a spurious box appears.
    pub spurious_rate: T,
    /// Mean lifetime of a spurious box in frames (geometric).
    pub spurious_persistence: T,
    pub spurious_confidence_min: T,
    pub spurious_confidence_max: T,
}

impl<T: Scalar> Default for NoiseParams<T> {
    fn default() -> Self {
        Self {
            miss_prob: T::zero(),
            confidence_drop: T::zero(),
            confidence_jitter: T::zero(),
            bbox_jitter: T::zero(),
            spurious_rate: T::zero(),
            spurious_persistence: T::one(),
            spurious_confidence_min: T::lit(0.2),
            spurious_confidence_max: T::lit(0.6),
        }
    }
}

/// Per-frame image quality: `base - |N(0,1)| * jitter`, clamped to `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct QualityParams<T> {
    pub base: T,
    pub jitter: T,
}

impl<T: Scalar> Default for QualityParams<T> {
    fn default() -> Self {
        Self {
            base: T::one(),
            jitter: T::zero(),
        }
    }
}

impl<T: Scalar> ScenarioSpec<T> {
    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate)
            .round()
            .to_usize()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ClipError> {
        let bad = |m: String| Err(ClipError::InvalidScenario(m));
        if !(self.frame_rate > T::zero()) {
            return bad(format!("frame rate {} must be positive", self.frame_rate));
        }
        if !(self.duration > T::zero()) || self.frame_count() == 0 {
            return bad(format!("duration {} must be positive", self.duration));
        }
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let n = &self.noise;
        for (name, p) in [
            ("miss_prob", n.miss_prob),
            ("confidence_drop", n.confidence_drop),
            ("spurious_rate", n.spurious_rate),
            ("spurious_confidence_min", n.spurious_confidence_min),
            ("spurious_confidence_max", n.spurious_confidence_max),
            ("quality.base", self.quality.base),
        ] {
            if !p.in_unit_interval() {
                return bad(format!("{name} {p} outside [0,1]"));
            }
        }
        if n.confidence_jitter < T::zero()
            || n.bbox_jitter < T::zero()
            || self.quality.jitter < T::zero()
        {
            return bad("noise deviations must be non-negative".into());
        }
        if n.spurious_persistence < T::one() {
            return bad("spurious_persistence must be >= 1 frame".into());
        }
        if n.spurious_confidence_min > n.spurious_confidence_max {
            return bad("spurious confidence range inverted".into());
        }
        let frames = self.frame_count() as u64;
        for p in &self.persons {
            if !self.nodes.contains(&p.node_id) {
                return bad(format!(
                    "person {} on unknown node {}",
                    p.person_id, p.node_id
                ));
            }
            if p.keyframes.is_empty() {
                return bad(format!("person {} has no keyframes", p.person_id));
            }
            for w in p.keyframes.windows(2) {
                if w[1].frame <= w[0].frame {
                    return bad(format!("person {}: keyframes not increasing", p.person_id));
                }
            }
            for k in &p.keyframes {
                if k.frame >= frames {
                    return bad(format!(
                        "person {}: keyframe {} past clip end",
                        p.person_id, k.frame
                    ));
                }
                k.bbox.validate().map_err(|e| {
                    ClipError::InvalidScenario(format!("person {}: trajectory {e}", p.person_id))
                })?;
            }
            if !(p.extra_confidence_drop.in_unit_interval() && p.extra_miss_prob.in_unit_interval())
            {
                return bad(format!("person {}: extra noise outside [0,1]", p.person_id));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> PersonScript<T> {
    fn entry(&self) -> u64 {
        self.keyframes[0].frame
    }

    fn exit(&self) -> u64 {
        self.keyframes[self.keyframes.len() - 1].frame
    }

    fn bbox_at(&self, frame: u64) -> Rect<T> {
        let ks = &self.keyframes;
        let i = ks.partition_point(|k| k.frame <= frame);
        if i == 0 {
            return ks[0].bbox;
        }
        if i == ks.len() {
            return ks[ks.len() - 1].bbox;
        }
        let (a, b) = (&ks[i - 1], &ks[i]);
        let t = T::from_u64(frame - a.frame).unwrap() / T::from_u64(b.frame - a.frame).unwrap();
        let lerp = |p: T, q: T| p + (q - p) * t;
        Rect {
            x_min: lerp(a.bbox.x_min, b.bbox.x_min),
            y_min: lerp(a.bbox.y_min, b.bbox.y_min),
            x_max: lerp(a.bbox.x_max, b.bbox.x_max),
            y_max: lerp(a.bbox.y_max, b.bbox.y_max),
        }
    }
}

struct Ghost<T> {
    bbox: Rect<T>,
    confidence: T,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn jitter_box<T: Scalar>(b: &Rect<T>, sigma: T, rng: &mut ChaCha8Rng) -> Rect<T> {
    let (w, h) = (b.width(), b.height());
    let mut d = [0.0f64; 4];
    for v in &mut d {
        *v = normal(rng);
    }
    let (z, o) = (T::zero(), T::one());
    let j = Rect {
        x_min: (b.x_min + T::lit(d[0]) * sigma * w).clamp_to(z, o),
        y_min: (b.y_min + T::lit(d[1]) * sigma * h).clamp_to(z, o),
        x_max: (b.x_max + T::lit(d[2]) * sigma * w).clamp_to(z, o),
        y_max: (b.y_max + T::lit(d[3]) * sigma * h).clamp_to(z, o),
    };
    if j.validate().is_ok() {
        j
    } else {
        *b
    }
}

/// Generates a clip from a scenario. Pure in `(scenario, seed)`.
pub fn synth_clip<T: Scalar>(scenario: &ScenarioSpec<T>, seed: u64) -> Result<Clip<T>, ClipError> {
    scenario.validate()?;
    let frames = scenario.frame_count();
    let period = T::lit(1000.0) / scenario.frame_rate;
    let noise = &scenario.noise;
    let (z, o) = (T::zero(), T::one());

    let mut streams = BTreeMap::new();
    for (node_idx, node) in scenario.nodes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(node_idx as u64);
        let persons: Vec<_> = scenario
            .persons
            .iter()
            .filter(|p| &p.node_id == node)
            .collect();
        let mut ghosts: Vec<Ghost<T>> = Vec::new();
        let mut records = Vec::with_capacity(frames);

        for i in 0..frames as u64 {
            let q =
                scenario.quality.base - T::lit(normal(&mut rng).abs()) * scenario.quality.jitter;
            let mut detections = Vec::new();

            for p in &persons {
                // draw unconditionally so one person's visibility never shifts
                // another's noise sequence
                let u_miss: f64 = rng.random();
                let n_conf = normal(&mut rng);
                let bbox = jitter_box(&p.bbox_at(i), noise.bbox_jitter, &mut rng);
                if !(p.entry()..=p.exit()).contains(&i) {
                    continue;
                }
                let miss = T::lit(u_miss) < noise.miss_prob + p.extra_miss_prob;
                if miss {
                    continue;
                }
                let confidence = (o - noise.confidence_drop - p.extra_confidence_drop
                    + T::lit(n_conf) * noise.confidence_jitter)
                    .clamp_to(z, o);
                detections.push(Detection {
                    class: DetectionClass::Person,
                    bbox,
                    confidence,
                });
            }

            let survive = o - o / noise.spurious_persistence;
            let mut kept = Vec::with_capacity(ghosts.len());
            for g in ghosts.drain(..) {
                let bbox = jitter_box(&g.bbox, noise.bbox_jitter, &mut rng);
                let confidence = (g.confidence
                    + T::lit(normal(&mut rng)) * noise.confidence_jitter)
                    .clamp_to(z, o);
                detections.push(Detection {
                    class: DetectionClass::Person,
                    bbox,
                    confidence,
                });
                let u: f64 = rng.random();
                if T::lit(u) < survive {
                    kept.push(g);
                }
            }
            ghosts = kept;
            let u_spawn: f64 = rng.random();
            if T::lit(u_spawn) < noise.spurious_rate {
                let w = T::lit(rng.random_range(0.04..0.15));
                let h = T::lit(rng.random_range(0.08..0.30));
                let x = T::lit(rng.random::<f64>()) * (o - w);
                let y = T::lit(rng.random::<f64>()) * (o - h);
                let c = T::lit(rng.random::<f64>());
                let confidence = noise.spurious_confidence_min
                    + c * (noise.spurious_confidence_max - noise.spurious_confidence_min);
                let bbox = Rect {
                    x_min: x,
                    y_min: y,
                    x_max: x + w,
                    y_max: y + h,
                };
                detections.push(Detection {
                    class: DetectionClass::Person,
                    bbox,
                    confidence,
                });
                ghosts.push(Ghost { bbox, confidence });
            }

            records.push(FrameRecord {
                node_id: node.clone(),
                frame_index: i,
                timestamp: T::from_u64(i).unwrap() * period,
                quality: q.clamp_to(z, o),
                detections,
            });
        }
        streams.insert(node.clone(), records);
    }

    let ground_truth = scenario
        .persons
        .iter()
        .map(|p| GroundTruthPerson {
            person_id: p.person_id.clone(),
            node_id: p.node_id.clone(),
            entry_frame: p.entry(),
            exit_frame: p.exit(),
            bboxes: (p.entry()..=p.exit()).map(|i| p.bbox_at(i)).collect(),
        })
        .collect();

    let clip = Clip {
        clip_id: scenario.clip_id.clone(),
        dataset: scenario.dataset.clone(),
        frame_rate: scenario.frame_rate,
        duration: scenario.duration,
        streams,
        ground_truth,
    };
    clip.validate()?;
    Ok(clip)
}
