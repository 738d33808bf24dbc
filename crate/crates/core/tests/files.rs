use std::io::Cursor;
use std::sync::Arc;

use serde_json::Value;
use teleassist::predictor::ScorerWeights;
use teleassist::scenesim::tasks::{task_scene, SceneVariation, TaskKind};
use teleassist::scenesim::{SceneDescription, SceneError};
use teleassist::session::trace::{read_trace, replay, TraceError, TraceRecord, TraceWriter};
use teleassist::session::{run_scripted, ScriptedOperator, Session, SessionConfig};

fn jar() -> SceneDescription {
    task_scene(TaskKind::Jar, &SceneVariation { seed: 5, jitter: 0.03, distractors: 3 })
}

#[test]
fn scene_files_round_trip_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("jar.json");
    let scene = jar();
    scene.save(&path).unwrap();
    let loaded = SceneDescription::load(&path).unwrap();
    assert_eq!(loaded, scene);
    assert_eq!(loaded.digest(), scene.digest());

    let mut json: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let first = json["objects"][0].clone();
    json["objects"].as_array_mut().unwrap().push(first);
    std::fs::write(&path, json.to_string()).unwrap();
    assert!(matches!(SceneDescription::load(&path), Err(SceneError::DuplicateId(_))));
}

#[test]
fn weight_files_round_trip_and_reject_foreign_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    let mut w = ScorerWeights::zeros(4);
    let flat: Vec<f64> = (0..w.flat().len()).map(|i| (i as f64 * 0.37).sin()).collect();
    w.set_flat(&flat);
    w.save(&path).unwrap();
    let loaded = ScorerWeights::load(&path).unwrap();
    assert!(loaded.flat().iter().zip(&flat).all(|(a, b)| a.to_bits() == b.to_bits()));

    let original: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    type Edit = (&'static str, fn(&mut Value));
    let edits: [Edit; 4] = [
        ("format", |v| v["format"] = "something-else".into()),
        ("version", |v| v["version"] = 99.into()),
        ("context", |v| v["context_dim"] = 3.into()),
        ("params", |v| {
            v["action_net"]["params"].as_array_mut().unwrap().pop();
        }),
    ];
    for (what, edit) in edits {
        let mut v = original.clone();
        edit(&mut v);
        std::fs::write(&path, v.to_string()).unwrap();
        assert!(ScorerWeights::load(&path).is_err(), "{what}");
    }
}

fn recorded_trace() -> (Vec<u8>, String) {
    let mut session = Session::new(jar(), SessionConfig { seed: 5, ..Default::default() }, None).unwrap();
    let mut operator = ScriptedOperator::new(&session).unwrap();
    let mut writer = TraceWriter::new(Vec::new(), &session).unwrap();
    run_scripted(&mut session, &mut operator, 120.0, &mut |events, s| writer.record(events, s).unwrap()).unwrap();
    let checksum = session.checksum();
    (writer.finish(&session).unwrap(), checksum)
}

#[test]
fn trace_files_are_json_lines_with_the_header_first() {
    let (bytes, checksum) = recorded_trace();
    let text = String::from_utf8(bytes.clone()).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["record"], "header");
    assert_eq!(lines[0]["scene"], serde_json::to_value(jar()).unwrap());
    assert_eq!(lines.last().unwrap()["record"], "checkpoint");
    assert_eq!(lines.last().unwrap()["checksum"], checksum.as_str());
    let seqs: Vec<u64> = lines.iter().filter(|l| l["record"] == "event").map(|l| l["seq"].as_u64().unwrap()).collect();
    assert!(seqs.iter().zip(1..).all(|(s, n)| *s == n));
    assert!(lines.iter().any(|l| l["record"] == "decision"));

    let trace = read_trace(Cursor::new(bytes)).unwrap();
    assert!(!trace.truncated);
    let (_, report) = replay(&trace, jar(), None, None).unwrap();
    assert_eq!(report.final_checksum, checksum);
}

#[test]
fn truncated_trace_replays_up_to_the_cut() {
    let (bytes, _) = recorded_trace();
    let text = String::from_utf8(bytes).unwrap();
    let keep = text.len() * 2 / 3;
    let cut = &text[..keep];
    let trace = read_trace(Cursor::new(cut.as_bytes())).unwrap();
    assert!(trace.truncated || cut.ends_with('\n'));
    let expected = trace.records.iter().filter(|r| matches!(r, TraceRecord::Checkpoint { .. })).count();
    let (_, report) = replay(&trace, jar(), None, None).unwrap();
    assert_eq!(report.checkpoints.len(), expected);
}

#[test]
fn foreign_or_headless_traces_are_rejected() {
    let (bytes, _) = recorded_trace();
    let text = String::from_utf8(bytes).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();

    let body = lines[1..].join("\n");
    assert!(matches!(read_trace(Cursor::new(body.into_bytes())), Err(TraceError::MissingHeader)));

    let mut header: Value = serde_json::from_str(&lines[0]).unwrap();
    header["version"] = 7.into();
    lines[0] = header.to_string();
    assert!(matches!(read_trace(Cursor::new(lines.join("\n").into_bytes())), Err(TraceError::Format { .. })));

    let trace = read_trace(Cursor::new(text.into_bytes())).unwrap();
    let weights = Arc::new(ScorerWeights::zeros(2));
    assert!(matches!(replay(&trace, jar(), Some(weights), None), Err(TraceError::WeightsMismatch)));
}
