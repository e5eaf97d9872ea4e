use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Clip, ClipError, FrameRecord, GroundTruthPerson};
use crate::num::Scalar;

pub const HEADER_FILE: &str = "clip.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

/// Contents of `clip.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct ClipHeader<T> {
    pub clip_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub frame_rate: T,
    pub duration: T,
    pub nodes: Vec<String>,
}

pub fn frames_file(node_id: &str) -> String {
    format!("frames_{node_id}.jsonl")
}

fn valid_node_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn schema_err(file: &Path, line: Option<usize>, msg: impl ToString) -> ClipError {
    ClipError::SchemaViolation {
        file: file.to_path_buf(),
        line,
        msg: msg.to_string(),
    }
}

fn open(path: &Path) -> Result<fs::File, ClipError> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ClipError::MissingFile(path.to_path_buf()),
        _ => ClipError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn read_jsonl<R: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, R)>, ClipError> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ClipError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| schema_err(path, Some(i + 1), e))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

/// Loads and validates a clip bundle directory.
pub fn load_clip<T: Scalar>(dir: impl AsRef<Path>) -> Result<Clip<T>, ClipError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(ClipError::MissingFile(dir.to_path_buf()));
    }
    let header_path = dir.join(HEADER_FILE);
    let header: ClipHeader<T> = serde_json::from_reader(BufReader::new(open(&header_path)?))
        .map_err(|e| schema_err(&header_path, None, e))?;
    if header.nodes.is_empty() {
        return Err(schema_err(&header_path, None, "node list is empty"));
    }
    let mut streams = BTreeMap::new();
    for node in &header.nodes {
        if !valid_node_id(node) {
            return Err(schema_err(
                &header_path,
                None,
                format!("bad node id {node:?}"),
            ));
        }
        let path = dir.join(frames_file(node));
        let mut frames = Vec::new();
        for (line, rec) in read_jsonl::<FrameRecord<T>>(&path)? {
            rec.validate()
                .map_err(|e| schema_err(&path, Some(line), e))?;
            frames.push(rec);
        }
        if streams.insert(node.clone(), frames).is_some() {
            return Err(schema_err(
                &header_path,
                None,
                format!("duplicate node {node}"),
            ));
        }
    }
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let ground_truth = read_jsonl::<GroundTruthPerson<T>>(&gt_path)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    let clip = Clip {
        clip_id: header.clip_id,
        dataset: header.dataset,
        frame_rate: header.frame_rate,
        duration: header.duration,
        streams,
        ground_truth,
    };
    clip.validate()?;
    Ok(clip)
}

fn write_file(path: PathBuf, body: &[u8]) -> Result<(), ClipError> {
    let mut f = fs::File::create(&path).map_err(|e| ClipError::Io {
        path: path.clone(),
        source: e,
    })?;
    f.write_all(body)
        .map_err(|e| ClipError::Io { path, source: e })
}

fn jsonl<R: Serialize>(records: &[R]) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("in-memory serialization");
        buf.push(b'\n');
    }
    buf
}

/// Writes a clip in canonical bundle form (creating `dir` if needed).
pub fn save_clip<T: Scalar>(clip: &Clip<T>, dir: impl AsRef<Path>) -> Result<(), ClipError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ClipError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let header = ClipHeader {
        clip_id: clip.clip_id.clone(),
        dataset: clip.dataset.clone(),
        frame_rate: clip.frame_rate,
        duration: clip.duration,
        nodes: clip.streams.keys().cloned().collect(),
    };
    let mut body = serde_json::to_vec_pretty(&header).expect("in-memory serialization");
    body.push(b'\n');
    write_file(dir.join(HEADER_FILE), &body)?;
    for (node, frames) in &clip.streams {
        write_file(dir.join(frames_file(node)), &jsonl(frames))?;
    }
    write_file(dir.join(GROUND_TRUTH_FILE), &jsonl(&clip.ground_truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn write_bundle(
        dir: &Path,
        nodes: &[&str],
        frames: usize,
        fps: f64,
        tweak: impl Fn(&str, usize) -> Option<String>,
    ) {
        let header = format!(
            "{{\"clip_id\":\"t\",\"frame_rate\":{fps},\"duration\":{},\"nodes\":{}}}",
            frames as f64 / fps,
            serde_json::to_string(nodes).unwrap()
        );
        fs::write(dir.join(HEADER_FILE), header).unwrap();
        for node in nodes {
            let mut s = String::new();
            for i in 0..frames {
                let line = tweak(node, i).unwrap_or_else(|| {
                    format!(
                        "{{\"node_id\":\"{node}\",\"frame_index\":{i},\"timestamp\":{},\"quality\":0.9,\"detections\":[]}}",
                        i as f64 * 1000.0 / fps
                    )
                });
                if !line.is_empty() {
                    writeln!(s, "{line}").unwrap();
                }
            }
            fs::write(dir.join(frames_file(node)), s).unwrap();
        }
        fs::write(dir.join(GROUND_TRUTH_FILE), "").unwrap();
    }

    #[test]
    fn two_nodes_hundred_frames_is_twenty_seconds() {
        let d = tempfile::tempdir().unwrap();
        write_bundle(d.path(), &["cam0", "cam1"], 100, 5.0, |_, _| None);
        let clip: Clip<f64> = load_clip(d.path()).unwrap();
        assert_eq!(clip.duration, 20.0);
        assert_eq!(clip.frame_count(), 100);
        assert_eq!(clip.streams.len(), 2);
    }

    #[test]
    fn gap_in_frames_rejected() {
        let d = tempfile::tempdir().unwrap();
        write_bundle(d.path(), &["cam1"], 100, 5.0, |_, i| {
            (i == 51).then(String::new)
        });
        let err = load_clip::<f64>(d.path()).unwrap_err();
        assert!(matches!(err, ClipError::InvariantViolation(_)), "{err}");
    }

    #[test]
    fn confidence_out_of_range_is_schema_violation() {
        let d = tempfile::tempdir().unwrap();
        write_bundle(d.path(), &["cam1"], 10, 5.0, |_, i| {
            (i == 3).then(|| {
                "{\"node_id\":\"cam1\",\"frame_index\":3,\"timestamp\":600.0,\"quality\":0.9,\"detections\":[{\"class\":\"person\",\"bbox\":{\"x_min\":0.1,\"y_min\":0.1,\"x_max\":0.2,\"y_max\":0.3},\"confidence\":1.3}]}".to_string()
            })
        });
        let err = load_clip::<f64>(d.path()).unwrap_err();
        assert!(
            matches!(err, ClipError::SchemaViolation { line: Some(4), .. }),
            "{err}"
        );
    }

    #[test]
    fn unknown_class_and_unknown_field_rejected() {
        let d = tempfile::tempdir().unwrap();
        write_bundle(d.path(), &["cam1"], 5, 5.0, |_, i| {
            (i == 0).then(|| {
                "{\"node_id\":\"cam1\",\"frame_index\":0,\"timestamp\":0.0,\"quality\":0.9,\"detections\":[{\"class\":\"dog\",\"bbox\":{\"x_min\":0.1,\"y_min\":0.1,\"x_max\":0.2,\"y_max\":0.3},\"confidence\":0.3}]}".to_string()
            })
        });
        assert!(matches!(
            load_clip::<f64>(d.path()),
            Err(ClipError::SchemaViolation { .. })
        ));

        write_bundle(d.path(), &["cam1"], 5, 5.0, |_, i| {
            (i == 0).then(|| {
                "{\"node_id\":\"cam1\",\"frame_index\":0,\"timestamp\":0.0,\"quality\":0.9,\"detections\":[],\"extra\":1}".to_string()
            })
        });
        assert!(matches!(
            load_clip::<f64>(d.path()),
            Err(ClipError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn missing_frames_file() {
        let d = tempfile::tempdir().unwrap();
        write_bundle(d.path(), &["cam1"], 5, 5.0, |_, _| None);
        fs::remove_file(d.path().join(frames_file("cam1"))).unwrap();
        assert!(matches!(
            load_clip::<f64>(d.path()),
            Err(ClipError::MissingFile(_))
        ));
        assert!(matches!(
            load_clip::<f64>(d.path().join("nope")),
            Err(ClipError::MissingFile(_))
        ));
    }

    #[test]
    fn unequal_stream_lengths_rejected() {
        let d = tempfile::tempdir().unwrap();
        write_bundle(d.path(), &["a", "b"], 10, 5.0, |n, i| {
            (n == "b" && i == 9).then(String::new)
        });
        assert!(matches!(
            load_clip::<f64>(d.path()),
            Err(ClipError::InvariantViolation(_))
        ));
    }
}
