mod common;

use common::{spec, walker};
use spotter::alertgate::Mode;
use spotter::controlplane::{BusError, ControlPlane, Lifecycle, StreamBody};
use spotter::runlog::{EventKind, RunEvent, RunStatus};

#[test]
fn alert_filter_sees_only_alerts_in_order() {
    let plane = ControlPlane::<f64>::default();
    let mut alerts = plane.subscribe(&[EventKind::Alert]);
    let out = plane
        .run_blocking(spec(vec![walker("solo", 20.0, 10, 89)], Mode::Reactive))
        .unwrap();
    let got = alerts.drain();
    assert_eq!(got.len(), out.log.alerts().count());
    assert!(!got.is_empty());
    let mut last = f64::MIN;
    for (i, m) in got.iter().enumerate() {
        assert_eq!(m.seq, i as u64 + 1);
        match &m.body {
            StreamBody::Entry(e) => {
                assert!(matches!(e.event, RunEvent::Alert(_)));
                assert!(e.timestamp >= last);
                last = e.timestamp;
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn subscribers_see_the_same_sequence() {
    let plane = ControlPlane::<f64>::default();
    let mut a = plane.subscribe(&[]);
    let mut b = plane.subscribe(&[]);
    let out = plane
        .run_blocking(spec(vec![walker("solo", 4.0, 2, 15)], Mode::Default))
        .unwrap();
    let (ga, gb) = (a.drain(), b.drain());
    assert_eq!(ga, gb);
    // Lifecycle bracketing plus every log entry.
    assert_eq!(ga.len(), out.log.entries.len() + 2);
    assert!(matches!(
        ga[0].body,
        StreamBody::Lifecycle(Lifecycle::RunStarted { .. })
    ));
    assert!(matches!(
        ga.last().unwrap().body,
        StreamBody::Lifecycle(Lifecycle::RunFinished {
            status: RunStatus::Completed,
            ..
        })
    ));
    let entries: Vec<_> = ga
        .iter()
        .filter_map(|m| match &m.body {
            StreamBody::Entry(e) => Some(e.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(entries, out.log.entries);
}

#[test]
fn slow_subscriber_is_dropped_without_stalling_the_run() {
    let plane = ControlPlane::<f64>::default();
    let mut slow = plane.bus().subscribe_with_capacity(&[], 8);
    let mut fast = plane.subscribe(&[EventKind::Run]);
    let out = plane
        .run_blocking(spec(vec![walker("solo", 20.0, 10, 89)], Mode::Reactive))
        .unwrap();
    assert_eq!(out.log.footer.status, RunStatus::Completed);
    assert!(slow.overrun());
    assert_eq!(slow.drain().len(), 8);
    assert_eq!(slow.recv(), Err(BusError::BufferOverrun(8)));
    assert!(!fast.overrun());
    assert_eq!(fast.drain().len(), 2);
}
