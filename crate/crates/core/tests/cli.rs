use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CKPT: &str = "--checkpoint run/checkpoint.dhkge --data data";

/// Runs the binary with `cmd` split on whitespace, then `extra` verbatim.
fn run(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhkge"))
        .args(cmd.split_whitespace())
        .args(extra)
        .current_dir(dir)
        .env("DHKGE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, cmd: &str) -> String {
    let out = run(dir, cmd, &[]);
    assert!(out.status.success(), "dhkge {cmd} failed: {}", stderr(&out));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A small dataset under `dir/data`.
fn dataset(dir: &Path) {
    ok(
        dir,
        "synth --out dump.tsv --entities 20 --concepts 5 --instance-facts 30 --ontology-facts 8 --depth 2 --seed 2",
    );
    ok(dir, "build-dataset --dump dump.tsv --out data --seed 2");
}

fn trained(dir: &Path) {
    dataset(dir);
    ok(dir, "train --data data --out run --dim 8 --n-heads 2 --epochs 2");
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic_and_depth_one_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let params = "--entities 12 --concepts 4 --instance-facts 20 --ontology-facts 0 --depth 1 --seed 9";
    ok(d, &format!("synth --out a.tsv {params}"));
    ok(d, &format!("synth --out b.tsv {params}"));
    let a = std::fs::read_to_string(d.join("a.tsv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.tsv")).unwrap());
    assert!(!a.lines().any(|l| l.split('\t').nth(1) == Some("subclass_of")));
    let manifest = read_json(&d.join("a.tsv.manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 9);
}

#[test]
fn build_preserves_entity_count_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path());
    let report = std::fs::read_to_string(dir.path().join("data/build_report.txt")).unwrap();
    assert!(report.contains("instance_entities=20"), "{report}");
    let out = ok(dir.path(), "validate --data data");
    assert!(out.starts_with("status=valid"));
    let manifest = read_json(&dir.path().join("data/manifest.json"));
    assert_eq!(manifest["dataset_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_dump_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "build-dataset --dump nope.tsv --out data", &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nope.tsv"));
}

#[test]
fn broken_dataset_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path());
    let links = dir.path().join("data/links_train.txt");
    let mut text = std::fs::read_to_string(&links).unwrap();
    text.push_str("nobody\tc0\n");
    std::fs::write(&links, text).unwrap();
    let out = run(dir.path(), "validate --data data", &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("nobody"));
}

#[test]
fn config_file_keeps_unset_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dataset(d);
    std::fs::write(d.join("config.json"), r#"{"epochs": 1, "dim": 12, "n_heads": 3}"#).unwrap();
    ok(
        d,
        "train --config config.json --data data --out run --dim 8 --n-heads 2",
    );
    let params = &read_json(&d.join("run/manifest.json"))["params"];
    assert_eq!(params["dim"], 8);
    assert_eq!(params["epochs"], 1);
    assert_eq!(params["learning_rate"], 5e-4);
    assert_eq!(params["batch_size"], 256);
    let saved = read_json(&d.join("run/config.json"));
    assert_eq!(&saved, params);
}

#[test]
fn bad_config_keys_are_all_named() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dataset(d);
    std::fs::write(d.join("config.json"), r#"{"dimm": 8, "epochs": "many"}"#).unwrap();
    let out = run(d, "train --config config.json --data data --out run", &[]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("dimm") && err.contains("epochs"), "{err}");
    assert!(!d.join("run/checkpoint.dhkge").exists());
}

#[test]
fn no_jl_logs_two_phases() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dataset(d);
    ok(
        d,
        "train --data data --out run --dim 8 --n-heads 2 --epochs 2 --ablation no_jl",
    );
    let phases: Vec<String> = std::fs::read_to_string(d.join("run/epochs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["phase"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(phases, ["intra", "intra", "mapping", "mapping"]);
}

#[test]
fn eval_tasks_and_restricted_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    let et = ok(d, &format!("eval {CKPT} --task et"));
    let report: Value = serde_json::from_str(et.trim()).unwrap();
    assert_eq!(report["task"], "et");
    assert!(report["h10"].is_number());

    let out = run(d, &format!("eval {CKPT} --task restricted"), &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--candidates"));

    let test_facts = std::fs::read_to_string(d.join("data/instance/facts_test.txt")).unwrap();
    let mut candidates: Vec<String> = test_facts
        .lines()
        .map(|l| l.split('\t').nth(2).unwrap().to_string())
        .collect();
    let entities = std::fs::read_to_string(d.join("data/instance/entities.txt")).unwrap();
    for e in entities.lines() {
        if candidates.len() >= 8 {
            break;
        }
        if !candidates.iter().any(|c| c == e) {
            candidates.push(e.to_string());
        }
    }
    candidates.sort();
    candidates.dedup();
    assert!(candidates.len() <= 8);
    std::fs::write(d.join("candidates.txt"), candidates.join("\n") + "\n").unwrap();
    let restricted = ok(d, &format!("eval {CKPT} --task restricted --candidates candidates.txt"));
    let report: Value = serde_json::from_str(restricted.trim()).unwrap();
    assert_eq!(report["task"], "restricted");
    assert!(report.get("h10").is_none());
    assert!(d.join("run/report-restricted-test.jsonl").exists());
}

#[test]
fn predict_needs_one_hole_and_lists_every_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    let fact = std::fs::read_to_string(d.join("data/instance/facts_train.txt")).unwrap();
    let first: Vec<&str> = fact.lines().next().unwrap().split('\t').collect();
    let query = format!("{} {} ?", first[0], first[1]);
    let n_entities = std::fs::read_to_string(d.join("data/instance/entities.txt"))
        .unwrap()
        .lines()
        .count();

    let out = run(d, &format!("predict {CKPT} --k 1000 --query"), &[&query]);
    assert!(out.status.success(), "{}", stderr(&out));
    let scores: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), n_entities);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    for bad in [
        format!("{} {} {}", first[0], first[1], first[2]),
        format!("? {} ?", first[1]),
    ] {
        let out = run(d, &format!("predict {CKPT} --query"), &[&bad]);
        assert!(!out.status.success(), "{bad}");
        assert!(stderr(&out).contains("hole"));
    }
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    let path = d.join("run/checkpoint.dhkge");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let out = run(d, &format!("eval {CKPT} --task et"), &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("truncated"), "{}", stderr(&out));
}
