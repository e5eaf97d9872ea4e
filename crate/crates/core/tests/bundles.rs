mod common;

use std::sync::Arc;

use spotter::alertgate::Mode;
use spotter::alertnet::MeshTopology;
use spotter::clipstore::corpus::corpus_clips;
use spotter::clipstore::{load_clip, save_clip, synth_clip};
use spotter::controlplane::{run_replay, ClipSource, RunSpec};
use spotter::{Clip, ClipF32, PipelineConfigF32, RunLog};

#[test]
fn clip_bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (i, clip) in corpus_clips::<f64>()
        .unwrap()
        .into_iter()
        .take(5)
        .enumerate()
    {
        let path = dir.path().join(format!("c{i}"));
        save_clip(&clip, &path).unwrap();
        let back: Clip = load_clip(&path).unwrap();
        assert_eq!(back, clip);
    }
}

#[test]
fn bundle_runs_match_in_memory_runs() {
    let dir = tempfile::tempdir().unwrap();
    let clip = common::noisy("disk", 11);
    save_clip(&clip, dir.path()).unwrap();
    let mem = run_replay(&common::spec(vec![clip], Mode::Default)).unwrap();
    let mut disk_spec = common::spec(vec![], Mode::Default);
    disk_spec.clips = vec![ClipSource::Path(dir.path().to_path_buf())];
    let disk = run_replay(&disk_spec).unwrap();
    assert_eq!(mem.to_bytes(), disk.to_bytes());
}

#[test]
fn run_log_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let log = run_replay(&common::spec(vec![common::noisy("f", 2)], Mode::Reactive)).unwrap();
    let path = dir.path().join("run.jsonl");
    log.save(&path).unwrap();
    let back = RunLog::load(&path).unwrap();
    assert_eq!(back, log);
    assert!(RunLog::read_from(&b"{\"footer\":{}}\n"[..]).is_err());
}

#[test]
fn single_precision_pipeline_runs() {
    let scenario = common::walker_scenario("f32", 10.0, 5, 40);
    let scenario: spotter::clipstore::ScenarioSpec<f32> =
        serde_json::from_str(&serde_json::to_string(&scenario).unwrap()).unwrap();
    let clip: ClipF32 = synth_clip(&scenario, 1).unwrap();
    let spec = RunSpec::new(
        vec![ClipSource::Loaded(Arc::new(clip))],
        PipelineConfigF32::for_mode(Mode::Reactive),
        MeshTopology::single_band("band0"),
    );
    let log = run_replay(&spec).unwrap();
    let times: Vec<f32> = log.alerts().map(|a| a.timestamp).collect();
    assert_eq!(times, vec![1000.0, 3000.0, 5000.0, 7000.0]);
}
