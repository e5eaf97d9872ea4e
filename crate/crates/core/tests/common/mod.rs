#![allow(dead_code)]

use std::sync::Arc;

use spotter::alertgate::Mode;
use spotter::alertnet::MeshTopology;
use spotter::clipstore::synth::Keyframe;
use spotter::clipstore::{synth_clip, NoiseParams, PersonScript};
use spotter::controlplane::{ClipSource, RunSpec};

use spotter::{Clip, PipelineConfig, Rect, ScenarioSpec};

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
    Rect::new(x0, y0, x1, y1).unwrap()
}

pub fn walker_person(id: &str, entry: u64, exit: u64) -> PersonScript<f64> {
    PersonScript {
        person_id: id.into(),
        node_id: "cam0".into(),
        keyframes: vec![
            Keyframe {
                frame: entry,
                bbox: rect(0.1, 0.4, 0.2, 0.8),
            },
            Keyframe {
                frame: exit,
                bbox: rect(0.6, 0.4, 0.7, 0.8),
            },
        ],
        extra_confidence_drop: 0.0,
        extra_miss_prob: 0.0,
    }
}

/// One person, perfect detector, 5 fps.
pub fn walker_scenario(clip_id: &str, seconds: f64, entry: u64, exit: u64) -> ScenarioSpec {
    ScenarioSpec {
        clip_id: clip_id.into(),
        dataset: Some("desk".into()),
        frame_rate: 5.0,
        duration: seconds,
        nodes: vec!["cam0".into()],
        persons: vec![walker_person("p0", entry, exit)],
        noise: NoiseParams::default(),
        quality: Default::default(),
    }
}

pub fn walker(clip_id: &str, seconds: f64, entry: u64, exit: u64) -> Clip {
    synth_clip(&walker_scenario(clip_id, seconds, entry, exit), 1).unwrap()
}

pub fn noisy(clip_id: &str, seed: u64) -> Clip {
    let mut s = walker_scenario(clip_id, 20.0, 5, 80);
    s.persons.push(PersonScript {
        node_id: "cam0".into(),
        ..walker_person("p1", 60, 95)
    });
    s.noise = NoiseParams {
        miss_prob: 0.1,
        confidence_drop: 0.2,
        confidence_jitter: 0.08,
        bbox_jitter: 0.04,
        spurious_rate: 0.15,
        spurious_persistence: 2.0,
        ..NoiseParams::default()
    };
    synth_clip(&s, seed).unwrap()
}

pub fn spec(clips: Vec<Clip>, mode: Mode) -> RunSpec<f64> {
    RunSpec::new(
        clips
            .into_iter()
            .map(|c| ClipSource::Loaded(Arc::new(c)))
            .collect(),
        PipelineConfig::for_mode(mode),
        MeshTopology::single_band("band0"),
    )
}
