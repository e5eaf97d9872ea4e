mod common;

use common::{rect, spec, walker, walker_person, walker_scenario};
use spotter::alertgate::{Mode, Zone};
use spotter::alertnet::{MeshTopology, TopologyDocument};
use spotter::clipstore::synth::Keyframe;
use spotter::clipstore::synth_clip;
use spotter::controlplane::run_replay;
use spotter::evalharness::{
    alert_delays, alert_percent, evaluate_clip, framewise_pr, EvalOptions, LatencyAccounting,
};
use spotter::geom::Point;
use spotter::runlog::{CaptureMode, RunEvent};

#[test]
fn noiseless_reactive_run_is_perfect() {
    let clip = walker("solo", 20.0, 10, 89);
    let log = run_replay(&spec(vec![clip.clone()], Mode::Reactive)).unwrap();
    assert_eq!(framewise_pr(&log, &clip, 0.5).unwrap(), (1.0, 1.0));
    assert_eq!(alert_percent(&log, &clip).unwrap(), 100.0);
    // Alert on the entry frame: raw delay 0 plus sensing latency.
    let d = alert_delays(&log, &clip, &LatencyAccounting::default()).unwrap();
    assert_eq!(d.compensated(), vec![67.0]);
}

#[test]
fn no_alerts_scores_zero_percent_and_full_precision() {
    let clip = walker("solo", 10.0, 5, 40);
    let mut s = spec(vec![clip.clone()], Mode::Reactive);
    // A zone the walker never touches.
    s.config.zones.insert(
        "cam0".into(),
        Zone::new(vec![
            Point::new(0.9, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.1),
        ])
        .unwrap(),
    );
    let log = run_replay(&s).unwrap();
    assert_eq!(log.alerts().count(), 0);
    assert_eq!(alert_percent(&log, &clip).unwrap(), 0.0);
    assert_eq!(framewise_pr(&log, &clip, 0.5).unwrap(), (1.0, 0.0));
}

#[test]
fn two_of_three_persons_alerted() {
    let mut sc = walker_scenario("three", 20.0, 2, 25);
    sc.persons.push(walker_person("p1", 35, 55));
    // The third walker stays on the right edge, outside the zone.
    sc.persons.push(spotter::clipstore::PersonScript {
        keyframes: vec![
            Keyframe {
                frame: 70,
                bbox: rect(0.85, 0.2, 0.95, 0.6),
            },
            Keyframe {
                frame: 90,
                bbox: rect(0.85, 0.3, 0.95, 0.7),
            },
        ],
        ..walker_person("p2", 0, 1)
    });
    let clip = synth_clip(&sc, 5).unwrap();
    let mut s = spec(vec![clip.clone()], Mode::Reactive);
    s.config.zones.insert(
        "cam0".into(),
        Zone::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.8, 0.0),
            Point::new(0.8, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap(),
    );
    let log = run_replay(&s).unwrap();
    let pct = alert_percent(&log, &clip).unwrap();
    assert!((pct - 200.0 / 3.0).abs() < 1e-9, "{pct}");
    let r = evaluate_clip(&log, &clip, &EvalOptions::default()).unwrap();
    assert_eq!((r.alerted, r.persons), (2, 3));
}

#[test]
fn mesh_latency_is_opt_in() {
    let clip = walker("solo", 6.0, 5, 20);
    let log = run_replay(&spec(vec![clip.clone()], Mode::Reactive)).unwrap();
    let base = alert_delays(&log, &clip, &LatencyAccounting::default())
        .unwrap()
        .compensated();
    let with_mesh = alert_delays(
        &log,
        &clip,
        &LatencyAccounting {
            include_mesh: true,
            ..LatencyAccounting::default()
        },
    )
    .unwrap()
    .compensated();
    assert_eq!(base.len(), 1);
    assert_eq!(with_mesh[0], base[0] + 9.0);
}

#[test]
fn earliest_delivery_is_used_for_mesh_latency() {
    let clip = walker("solo", 6.0, 5, 20);
    let mut s = spec(vec![clip.clone()], Mode::Reactive);
    let doc: TopologyDocument = serde_json::from_value(serde_json::json!({
        "devices": [
            {"device_id": "near", "kind": "alertband"},
            {"device_id": "a", "kind": "alertbeacon"},
            {"device_id": "b", "kind": "alertbeacon"},
            {"device_id": "far", "kind": "halo_light"}
        ],
        "links": [["coordinator", "near"], ["coordinator", "a"], ["a", "b"], ["b", "far"]]
    }))
    .unwrap();
    s.topology = MeshTopology::from_document(doc).unwrap();
    let log = run_replay(&s).unwrap();
    let first = log.alerts().next().unwrap().event_id;
    let mut lat: Vec<f64> = log
        .deliveries()
        .filter(|d| d.event_id == first)
        .map(|d| d.latency())
        .collect();
    lat.sort_by(f64::total_cmp);
    assert_eq!(lat.len(), 4);
    assert_eq!(lat[0], 9.0);
    assert!((lat[3] - (18.0 + 2.0 * 82.0 / 3.0) / 2.0).abs() < 1e-9);
    let acct = LatencyAccounting {
        include_mesh: true,
        ..LatencyAccounting::default()
    };
    assert_eq!(
        alert_delays(&log, &clip, &acct).unwrap().compensated(),
        vec![67.0 + 9.0]
    );
}

#[test]
fn harness_loop_capture_removes_round_trip() {
    let clip = walker("late", 10.0, 0, 40);
    // Default needs two hits, so the first alert is one frame (200 ms) in.
    let mut s = spec(vec![clip.clone()], Mode::Default);
    s.capture = CaptureMode::HarnessLoop;
    let log = run_replay(&s).unwrap();
    let first = log
        .events()
        .find_map(|e| match e {
            RunEvent::Alert(a) => Some(a.timestamp),
            _ => None,
        })
        .unwrap();
    assert_eq!(first, 200.0);
    let d = alert_delays(&log, &clip, &LatencyAccounting::default()).unwrap();
    assert_eq!(d.compensated(), vec![200.0 - 83.0 + 67.0]);
    assert!(d.warnings.is_empty());
}

/// Per-device debounce lets a ghost alert mask a person's first alert for
/// the whole window, so per-person ordering is checked with ghosts removed.
#[test]
fn first_alert_ordering_per_person() {
    use spotter::clipstore::corpus::corpus_scenarios;

    let acct = LatencyAccounting::default();
    let mut compared = 0;
    for e in corpus_scenarios::<f64>() {
        let mut sc = e.scenario;
        sc.noise.spurious_rate = 0.0;
        let clip = synth_clip(&sc, e.seed).unwrap();
        let first: Vec<std::collections::BTreeMap<_, f64>> = Mode::ALL
            .iter()
            .map(|&m| {
                let log = run_replay(&spec(vec![clip.clone()], m)).unwrap();
                let d = alert_delays(&log, &clip, &acct).unwrap();
                d.delays.into_iter().map(|p| (p.person, p.raw)).collect()
            })
            .collect();
        let (r, d, c) = (&first[0], &first[1], &first[2]);
        for (p, t) in d {
            assert!(r.get(p).is_some_and(|x| x <= t), "{} {p:?}", clip.clip_id);
        }
        for (p, t) in c {
            assert!(d.get(p).is_some_and(|x| x <= t), "{} {p:?}", clip.clip_id);
            compared += 1;
        }
    }
    assert!(compared > 30);
}

#[test]
fn corpus_false_alerts_fall_with_strictness() {
    use spotter::clipstore::corpus::corpus_clips;
    use spotter::evalharness::attribute_alerts;
    use std::collections::BTreeSet;

    let clips = corpus_clips::<f64>().unwrap();
    let false_alerts: Vec<usize> = Mode::ALL
        .iter()
        .map(|&m| {
            clips
                .iter()
                .map(|clip| {
                    let log = run_replay(&spec(vec![clip.clone()], m)).unwrap();
                    let credited: BTreeSet<u64> = attribute_alerts(&log, clip)
                        .unwrap()
                        .iter()
                        .map(|a| a.event_id)
                        .collect();
                    log.alerts().count() - credited.len()
                })
                .sum()
        })
        .collect();
    let (r, d, c) = (false_alerts[0], false_alerts[1], false_alerts[2]);
    assert!(c < d && d < r, "{false_alerts:?}");
}
