use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn teleassist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleassist")).args(args).env("TELEASSIST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let o = teleassist(&["serve", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(teleassist(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(teleassist(&["eval", "--k", "four"]).status.code(), Some(2));
}

#[test]
fn gen_scenes_writes_the_three_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let o = teleassist(&["gen-scenes", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["jar", "dial", "plug"] {
        let scene: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{name}.json"))).unwrap()).unwrap();
        assert!(!scene["objects"].as_array().unwrap().is_empty(), "{name}");
    }
}

#[test]
fn serve_refuses_bad_startup() {
    let dir = tempfile::tempdir().unwrap();
    teleassist(&["gen-scenes", "--out", p(dir.path())]);
    let scene = dir.path().join("jar.json");
    let trace = dir.path().join("t.jsonl");

    let o = teleassist(&["serve", "--scene", p(&scene), "--mode", "PM", "--trace", p(&trace)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--weights"), "{}", stderr(&o));

    let o = teleassist(&["serve", "--scene", p(&dir.path().join("missing.json")), "--trace", p(&trace)]);
    assert_eq!(o.status.code(), Some(1));

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = teleassist(&["serve", "--scene", p(&scene), "--listen", &addr, "--trace", p(&trace)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("port busy"), "{}", stderr(&o));
}

#[test]
fn detect_finds_one_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (center, radius) = ([0.1, -0.05, 0.8], 0.05);
    let mut points = Vec::new();
    let step = 0.002;
    let n = (radius / step) as i32;
    for i in -n..=n {
        for j in -n..=n {
            let (x, y) = (i as f64 * step, j as f64 * step);
            if x * x + y * y <= radius * radius {
                points.push([center[0] + x, center[1] + y, center[2]]);
            }
        }
    }
    let indices: Vec<usize> = (0..points.len()).collect();
    let cloud = dir.path().join("cloud.json");
    let masks = dir.path().join("masks.json");
    fs::write(&cloud, json!({ "points": points }).to_string()).unwrap();
    fs::write(&masks, json!([{ "label": "disk", "indices": indices }]).to_string()).unwrap();

    let o = teleassist(&["detect", "--cloud", p(&cloud), "--masks", p(&masks)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let found: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let circles = found["circles"].as_array().unwrap();
    assert_eq!(circles.len(), 1, "{found}");
    let circle = &circles[0]["circle"];
    let c: Vec<f64> = serde_json::from_value(circle["center"].clone()).unwrap();
    for k in 0..3 {
        assert!((c[k] - center[k]).abs() < 0.002, "{c:?}");
    }
    assert!((circle["radius"].as_f64().unwrap() - radius).abs() < 0.003);
    assert_eq!(found["planes"].as_array().unwrap().len(), 1);

    fs::write(&masks, json!([{ "label": "disk", "indices": [points.len()] }]).to_string()).unwrap();
    assert_eq!(teleassist(&["detect", "--cloud", p(&cloud), "--masks", p(&masks)]).status.code(), Some(1));
}

#[test]
fn demos_train_eval_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let demos = dir.path().join("demos");
    let o = teleassist(&["gen-demos", "--out", p(&demos), "--per-task", "2", "--seed", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("success=true").count(), 6, "{}", stdout(&o));

    let weights = dir.path().join("weights.json");
    let o = teleassist(&["train", "--traces", p(&demos), "--epochs", "100", "--seed", "1", "--out", p(&weights)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(weights.exists());

    let o = teleassist(&["eval", "--traces", p(&demos), "--weights", p(&weights), "--k", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let rate = |label: &str| -> f64 {
        let line = out.lines().find(|l| l.starts_with(label)).unwrap_or_else(|| panic!("{out}"));
        line[label.len()..].trim().parse().unwrap()
    };
    assert!((0.0..=1.0).contains(&rate("top-1:")));
    assert!(rate("top-4:") >= rate("top-1:"));

    let scenes = dir.path().join("scenes");
    let trace = demos.join("plug-0010.jsonl");
    let trace_text = fs::read_to_string(&trace).unwrap();
    let header: Value = serde_json::from_str(trace_text.lines().next().unwrap()).unwrap();
    fs::create_dir_all(&scenes).unwrap();
    let scene = scenes.join("plug.json");
    fs::write(&scene, header["scene"].to_string()).unwrap();
    let o = teleassist(&["replay", "--trace", p(&trace), "--scene", p(&scene)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().filter(|l| l.starts_with("checkpoint")).count() >= 2);
    assert!(stdout(&o).contains("task complete true"));

    // The nominal plug scene is not the one recorded.
    teleassist(&["gen-scenes", "--out", p(&scenes), "--distractors", "0"]);
    let o = teleassist(&["replay", "--trace", p(&trace), "--scene", p(&scene)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
}
