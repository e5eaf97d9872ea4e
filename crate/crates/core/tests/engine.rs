mod common;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use common::{noisy, spec, walker};
use spotter::alertgate::Mode;
use spotter::alertnet::{MeshTopology, TopologyDocument};
use spotter::controlplane::{
    run_replay, ClipSource, ConfigChange, ConfigPatch, ControlError, ControlPlane,
};
use spotter::runlog::{ClockMode, RunEvent, RunStatus};
use spotter::{RunLog, Track};

fn tracks_by_node(log: &RunLog) -> Vec<(String, Vec<Vec<Track>>)> {
    log.header
        .nodes
        .iter()
        .map(|n| {
            let hist = log
                .events()
                .filter_map(|e| match e {
                    RunEvent::Tracks {
                        node_id, tracks, ..
                    } if *node_id == n.node_id => Some(
                        tracks
                            .iter()
                            .map(|t| Track {
                                node_id: String::new(),
                                ..t.clone()
                            })
                            .collect(),
                    ),
                    _ => None,
                })
                .collect();
            (n.node_id.clone(), hist)
        })
        .collect()
}

#[test]
fn duplicated_streams_have_identical_track_histories() {
    let clip = noisy("dup", 9);
    let two = run_replay(&spec(vec![clip.clone()], Mode::Default)).unwrap();
    let mut one_spec = spec(vec![clip], Mode::Default);
    one_spec.duplication = 1;
    let one = run_replay(&one_spec).unwrap();

    let h2 = tracks_by_node(&two);
    let h1 = tracks_by_node(&one);
    assert_eq!(h2.len(), 2);
    assert_ne!(h2[0].0, h2[1].0);
    assert_eq!(h2[0].1.len(), 100);
    assert!(h2[0].1.iter().any(|t| !t.is_empty()));
    assert_eq!(h2[0].1, h2[1].1);
    assert_eq!(h1[0].1, h2[0].1);
}

#[test]
fn noiseless_reactive_alerts_once_per_debounce_window() {
    // In frame from 2000 ms to 17800 ms.
    let log = run_replay(&spec(vec![walker("solo", 20.0, 10, 89)], Mode::Reactive)).unwrap();
    let times: Vec<f64> = log.alerts().map(|a| a.timestamp).collect();
    let expected: Vec<f64> = (0..8).map(|k| 2000.0 + 2000.0 * k as f64).collect();
    assert_eq!(times, expected);
    assert_eq!(log.deliveries().count(), 8);
    for d in log.deliveries() {
        assert_eq!(d.device_id, "band0");
    }
}

#[test]
fn identical_specs_give_identical_bytes() {
    let s = spec(vec![noisy("a", 3), noisy("b", 4)], Mode::Reactive);
    let a = run_replay(&s).unwrap().to_bytes();
    let b = run_replay(&s).unwrap().to_bytes();
    assert_eq!(a, b);
    let round = RunLog::read_from(&a[..]).unwrap();
    assert_eq!(round.to_bytes(), a);
}

#[test]
fn frames_are_merged_in_timestamp_order() {
    let log = run_replay(&spec(vec![noisy("a", 3), noisy("b", 4)], Mode::Default)).unwrap();
    let ts: Vec<f64> = log.entries.iter().map(|e| e.timestamp).collect();
    assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(log.footer.frames_processed, 400);
    let seqs: Vec<u64> = log.entries.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (0..seqs.len() as u64).collect::<Vec<_>>());
}

#[test]
fn spec_errors() {
    let mut s = spec(vec![walker("w", 2.0, 0, 5)], Mode::Default);
    s.clips.push(ClipSource::Path("/nonexistent/clip".into()));
    assert!(matches!(run_replay(&s), Err(ControlError::ClipLoad { .. })));

    let mut s = spec(vec![walker("w", 2.0, 0, 5)], Mode::Default);
    s.topology = MeshTopology::from_document(TopologyDocument {
        devices: vec![],
        links: vec![],
    })
    .unwrap();
    assert!(matches!(
        run_replay(&s),
        Err(ControlError::TopologyUnreachable(_))
    ));

    let mut s = spec(vec![walker("w", 2.0, 0, 5)], Mode::Default);
    s.duplication = 0;
    assert!(matches!(run_replay(&s), Err(ControlError::InvalidSpec(_))));

    let s = spec(
        vec![walker("w", 2.0, 0, 5), walker("w", 2.0, 0, 5)],
        Mode::Default,
    );
    assert!(matches!(run_replay(&s), Err(ControlError::InvalidSpec(_))));
}

fn realtime(clip_seconds: f64) -> spotter::controlplane::RunSpec<f64> {
    let exit = ((clip_seconds * 5.0) as u64 - 1).min(10);
    let mut s = spec(vec![walker("rt", clip_seconds, 0, exit)], Mode::Reactive);
    s.clock_mode = ClockMode::Realtime;
    s.duplication = 1;
    s
}

#[test]
fn realtime_pacing_is_tight_and_never_early() {
    let plane = ControlPlane::<f64>::default();
    let out = plane.run_blocking(realtime(3.0)).unwrap();
    assert_eq!(out.stats.frames, 15);
    assert_eq!(out.stats.early_frames, 0);
    assert!(
        out.stats.mean_pacing_error_ms < 10.0,
        "mean pacing error {} ms",
        out.stats.mean_pacing_error_ms
    );
}

#[test]
fn stop_truncates_at_a_frame_boundary() {
    let plane = ControlPlane::<f64>::default();
    plane.start_run(realtime(20.0), None).unwrap();
    assert!(matches!(
        plane.start_run(realtime(20.0), None),
        Err(ControlError::RunActive)
    ));
    thread::sleep(Duration::from_millis(700));
    plane.stop_run().unwrap();
    let log = plane.wait_run().unwrap().unwrap().log;
    assert_eq!(log.footer.status, RunStatus::Aborted);
    let n = log.footer.frames_processed;
    assert!(n > 0 && n < 100, "{n} frames");
    let frames = log
        .events()
        .filter(|e| matches!(e, RunEvent::Frame { .. }))
        .count();
    let tracks = log
        .events()
        .filter(|e| matches!(e, RunEvent::Tracks { .. }))
        .count();
    assert_eq!(frames as u64, n);
    assert_eq!(tracks as u64, n);
    assert!(matches!(plane.stop_run(), Err(ControlError::NoActiveRun)));
}

#[test]
fn config_changes_land_on_frame_boundaries() {
    let plane = ControlPlane::<f64>::default();
    let mut s = realtime(2.0);
    s.clips = vec![ClipSource::Loaded(Arc::new(walker("cfg", 2.0, 0, 9)))];
    plane.start_run(s, None).unwrap();
    thread::sleep(Duration::from_millis(650));
    let snap = plane
        .apply(&ConfigChange::SetConfig(ConfigPatch {
            alert_confidence_threshold: Some(0.55),
            ..Default::default()
        }))
        .unwrap();
    let log = plane.wait_run().unwrap().unwrap().log;

    let mut current = log.header.config_version;
    let mut saw_change = false;
    for e in log.events() {
        match e {
            RunEvent::ConfigChanged { version, config } => {
                assert_eq!(*version, snap.version);
                assert_eq!(config.alert_confidence_threshold, 0.55);
                current = *version;
                saw_change = true;
            }
            RunEvent::Frame { config_version, .. } => assert_eq!(*config_version, current),
            _ => {}
        }
    }
    assert!(saw_change);
    let versions: Vec<u64> = log
        .events()
        .filter_map(|e| match e {
            RunEvent::Frame { config_version, .. } => Some(*config_version),
            _ => None,
        })
        .collect();
    assert_eq!(versions.first(), Some(&log.header.config_version));
    assert_eq!(versions.last(), Some(&snap.version));
}
