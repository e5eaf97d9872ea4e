use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spotter::alertgate::Mode;
use spotter::clipstore::synth::Keyframe;
use spotter::clipstore::{load_clip, NoiseParams, PersonScript};
use spotter::evalharness::MetricsReport;
use spotter::{Clip, Rect, RunLog, ScenarioSpec};

fn spotter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spotter"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = spotter(args);
    assert!(
        out.status.success(),
        "spotter {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scenario() -> ScenarioSpec {
    let r = |x: f64| Rect::new(x, 0.4, x + 0.1, 0.8).unwrap();
    ScenarioSpec {
        clip_id: "hall".into(),
        dataset: Some("desk".into()),
        frame_rate: 5.0,
        duration: 6.0,
        nodes: vec!["cam0".into()],
        persons: vec![PersonScript {
            person_id: "p0".into(),
            node_id: "cam0".into(),
            keyframes: vec![
                Keyframe {
                    frame: 2,
                    bbox: r(0.1),
                },
                Keyframe {
                    frame: 25,
                    bbox: r(0.6),
                },
            ],
            extra_confidence_drop: 0.0,
            extra_miss_prob: 0.0,
        }],
        noise: NoiseParams::default(),
        quality: Default::default(),
    }
}

#[test]
fn synth_run_eval() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("scenario.json");
    fs::write(&sc, serde_json::to_string(&scenario()).unwrap()).unwrap();
    let bundle = dir.path().join("hall");
    ok(&[
        "synth",
        "--scenario",
        s(&sc),
        "--seed",
        "3",
        "--out",
        s(&bundle),
    ]);
    let clip: Clip = load_clip(&bundle).unwrap();
    assert_eq!(clip.clip_id, "hall");
    assert_eq!(clip.frame_count(), 30);

    let log_path = dir.path().join("run.jsonl");
    let out = ok(&[
        "run",
        s(&bundle),
        "--mode",
        "reactive",
        "--out",
        s(&log_path),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("60 frames"));
    let log = RunLog::load(&log_path).unwrap();
    assert_eq!(log.header.config.mode, Mode::Reactive);
    assert!(log.alerts().count() > 0);

    // stdout form matches the file form.
    let piped = ok(&["run", s(&bundle), "--mode", "reactive"]);
    assert_eq!(piped.stdout, fs::read(&log_path).unwrap());

    let out = ok(&[
        "eval",
        "--run",
        s(&log_path),
        "--clip",
        s(&bundle),
        "--json",
    ]);
    let report: MetricsReport<f64> = serde_json::from_slice(&out.stdout).unwrap();
    let avg = report.average(Mode::Reactive).unwrap();
    assert_eq!(avg.alert_percent, 100.0);
    assert_eq!(avg.precision, 1.0);

    let table = ok(&["eval", "--run", s(&log_path), "--clip", s(&bundle)]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("desk"));
}

#[test]
fn eval_needs_pairs() {
    let out = spotter(&["eval", "--run", "a.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--clip"));
}

#[test]
fn validate_reports_each_document() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(
        &good,
        r#"{"mode":"certain","alert_confidence_threshold":0.8}"#,
    )
    .unwrap();
    let out = ok(&["validate", "--config", s(&good)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok"));

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"mode":"default","alert_confidence_threshold":1.5}"#,
    )
    .unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"mode":"default","sensitivity":3}"#).unwrap();
    let sc = dir.path().join("scenario.json");
    fs::write(&sc, serde_json::to_string(&scenario()).unwrap()).unwrap();
    let out = spotter(&[
        "validate",
        "--config",
        s(&good),
        "--config",
        s(&bad),
        "--config",
        s(&unknown),
        "--scenario",
        s(&sc),
    ]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("ok"));
    assert!(lines[1].starts_with("FAIL"));
    assert!(lines[2].starts_with("FAIL"));
    assert!(lines[3].starts_with("ok"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 document(s)"));

    assert!(!spotter(&["validate"]).status.success());
}

#[test]
fn corpus_synth_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--corpus", "--out", s(dir.path())]);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 34);

    let out = ok(&["eval", "--corpus", "--json"]);
    let report: MetricsReport<f64> = serde_json::from_slice(&out.stdout).unwrap();
    let r = report.average(Mode::Reactive).unwrap();
    let c = report.average(Mode::Certain).unwrap();
    assert!(r.recall > c.recall);
    assert!(c.precision > r.precision);
}

#[test]
fn readme_config_example_validates() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```json\n{").unwrap() + "```json\n".len();
    let len = readme[start..].find("```").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, &readme[start..start + len]).unwrap();
    ok(&["validate", "--config", s(&cfg)]);
}
